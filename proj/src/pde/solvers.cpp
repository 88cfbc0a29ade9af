// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/pde/solvers.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "zebra/num/rng.hpp"
#include "zebra/pde/fft.hpp"

namespace zebra::pde {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Trajectory empty_trajectory(const DatasetProfile& profile, double dx) {
  Trajectory tr;
  tr.frames = profile.frames;
  tr.frame_size = profile.frame_size();
  tr.values.assign(static_cast<std::size_t>(tr.frames * tr.frame_size), 0.0);
  tr.dt_snapshot = profile.t_final / static_cast<double>(profile.frames - 1);
  tr.dx = dx;
  return tr;
}

double snapshot_time(const DatasetProfile& profile, std::int64_t j) {
  return profile.t_final * static_cast<double>(j) / static_cast<double>(profile.frames - 1);
}

void check_size(const std::vector<double>& u0, const DatasetProfile& profile, const char* who) {
  if (static_cast<std::int64_t>(u0.size()) != profile.frame_size()) {
    throw std::invalid_argument(std::string(who) + ": initial condition has " + std::to_string(u0.size()) +
                                " values, grid expects " + std::to_string(profile.frame_size()));
  }
  if (profile.frames < 2) throw std::invalid_argument(std::string(who) + ": need at least 2 frames");
}

bool all_finite_below(const std::vector<double>& u, double bound) {
  for (double v : u)
    if (!std::isfinite(v) || std::abs(v) > bound) return false;
  return true;
}

// Right-hand side of the combined equation in pseudo-spectral form.
class CombinedRhs {
 public:
  CombinedRhs(const EnvironmentSpec& env, int n, double length)
      : n_(n), length_(length), fft_({n}), alpha_(env.param("alpha")), beta_(env.param("beta")),
        gamma_(env.param("gamma")), forcing_(env.forcing), uh_(n / 2 + 1), sh_(n / 2 + 1),
        sq_(n) {
    k_.resize(n / 2 + 1);
    for (int m = 0; m <= n / 2; ++m) k_[m] = kTwoPi * m / length;
    cutoff_ = n / 3;
  }

  void operator()(double t, const std::vector<double>& u, std::vector<double>& out) {
    fft_.forward(u.data(), uh_.data());
    for (int i = 0; i < n_; ++i) sq_[i] = u[i] * u[i];
    fft_.forward(sq_.data(), sh_.data());
    const cplx I(0.0, 1.0);
    for (int m = 0; m <= n_ / 2; ++m) {
      if (m > cutoff_) {
        uh_[m] = 0.0;
        continue;
      }
      const double k = k_[m];
      uh_[m] = -alpha_ * I * k * sh_[m] - beta_ * k * k * uh_[m] + gamma_ * I * k * k * k * uh_[m];
    }
    out.resize(n_);
    fft_.inverse(uh_.data(), out.data());
    for (const auto& f : forcing_) {
      for (int i = 0; i < n_; ++i) {
        const double x = length_ * i / n_;
        out[i] += f.amplitude * std::sin(f.omega * t + kTwoPi * f.ell * x / length_ + f.phase);
      }
    }
  }

 private:
  int n_;
  double length_;
  RealFft fft_;
  double alpha_, beta_, gamma_;
  std::vector<ForcingMode> forcing_;
  std::vector<double> k_;
  int cutoff_;
  std::vector<cplx> uh_, sh_;
  std::vector<double> sq_;
};

// Dormand-Prince 5(4) with FSAL, advancing y from t0 to t1 exactly.
template <typename Rhs>
void dopri_advance(Rhs& f, double t0, double t1, std::vector<double>& y, double& h,
                   const SpectralOptions& opt, std::vector<double>& k1, bool& k1_valid) {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                          b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  const std::size_t n = y.size();
  std::vector<double> k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), ynew(n);
  double t = t0;
  if (!k1_valid) {
    f(t, y, k1);
    k1_valid = true;
  }
  while (t < t1) {
    const bool last = t + h >= t1 * (1 - 1e-14);
    const double step = last ? t1 - t : h;
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + step * a21 * k1[i];
    f(t + c2 * step, tmp, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + step * (a31 * k1[i] + a32 * k2[i]);
    f(t + c3 * step, tmp, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + step * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    f(t + c4 * step, tmp, k4);
    for (std::size_t i = 0; i < n; ++i)
      tmp[i] = y[i] + step * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    f(t + c5 * step, tmp, k5);
    for (std::size_t i = 0; i < n; ++i)
      tmp[i] = y[i] + step * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    f(t + step, tmp, k6);
    for (std::size_t i = 0; i < n; ++i)
      ynew[i] = y[i] + step * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
    f(t + step, ynew, k7);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = step * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
      const double sc = opt.atol + opt.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      err = std::max(err, std::abs(e) / sc);
    }
    if (!std::isfinite(err)) err = 1e10;
    const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
    if (err <= 1.0) {
      t = last ? t1 : t + step;
      y.swap(ynew);
      k1.swap(k7);
      if (!all_finite_below(y, opt.blowup)) {
        throw UnstableError("solution norm exceeded " + std::to_string(opt.blowup) + " at t=" + std::to_string(t));
      }
      if (!last) h = step * factor;
    } else {
      h = step * factor;
    }
    if (h < 1e-12 * std::max(1.0, t1)) throw UnstableError("step size underflow at t=" + std::to_string(t));
  }
}

}  // namespace

Trajectory solve_advection(const EnvironmentSpec& env, const std::vector<double>& u0,
                           const DatasetProfile& profile) {
  check_size(u0, profile, "solve_advection");
  const int n = static_cast<int>(profile.grid.at(0));
  const double beta = env.param("beta");
  Trajectory tr = empty_trajectory(profile, profile.length / n);
  RealFft fft({n});
  std::vector<cplx> base(fft.spectrum_size()), shifted(fft.spectrum_size());
  fft.forward(u0.data(), base.data());
  for (std::int64_t j = 0; j < profile.frames; ++j) {
    const double shift = beta * snapshot_time(profile, j);
    for (int m = 0; m <= n / 2; ++m) {
      const double k = kTwoPi * m / profile.length;
      shifted[m] = base[m] * std::polar(1.0, -k * shift);
      if (m == n / 2 && n % 2 == 0) shifted[m] = base[m].real() * std::cos(k * shift);
    }
    fft.inverse(shifted.data(), tr.frame(j));
  }
  return tr;
}

Trajectory solve_combined(const EnvironmentSpec& env, const std::vector<double>& u0,
                          const DatasetProfile& profile, const SpectralOptions& opt) {
  check_size(u0, profile, "solve_combined");
  const int n = static_cast<int>(profile.grid.at(0));
  Trajectory tr = empty_trajectory(profile, profile.length / n);
  CombinedRhs rhs(env, n, profile.length);
  std::vector<double> y = u0, k1(n);
  bool k1_valid = false;
  double h = 1e-3 * tr.dt_snapshot;
  std::copy(y.begin(), y.end(), tr.frame(0));
  for (std::int64_t j = 1; j < profile.frames; ++j) {
    dopri_advance(rhs, snapshot_time(profile, j - 1), snapshot_time(profile, j), y, h, opt, k1, k1_valid);
    std::copy(y.begin(), y.end(), tr.frame(j));
  }
  return tr;
}

Trajectory solve_wave1d_boundary(const EnvironmentSpec& env, const std::vector<double>& u0,
                                 const DatasetProfile& profile, const Wave1dOptions& opt,
                                 std::vector<double>* energy) {
  check_size(u0, profile, "solve_wave1d_boundary");
  if (!(opt.cfl > 0.0 && opt.cfl <= 0.5)) {
    throw std::invalid_argument("solve_wave1d_boundary: CFL number " + std::to_string(opt.cfl) +
                                " outside (0, 0.5]");
  }
  if (env.left == Boundary::periodic || env.right == Boundary::periodic) {
    throw std::invalid_argument("solve_wave1d_boundary: each side needs dirichlet or neumann");
  }
  const int n = static_cast<int>(profile.grid.at(0));
  const double dx = 16.0 / (n - 1);
  const double c = env.param("c");
  Trajectory tr = empty_trajectory(profile, dx);
  const double frame_dt = tr.dt_snapshot;
  const double dt_max = c > 0 ? opt.cfl * dx / c : frame_dt;
  const auto sub = static_cast<std::int64_t>(std::ceil(frame_dt / dt_max - 1e-9));
  const double dt = frame_dt / static_cast<double>(sub);
  const double r2 = (c * dt / dx) * (c * dt / dx);

  auto apply_bc = [&](std::vector<double>& u) {
    if (env.left == Boundary::dirichlet) u[0] = 0.0; else u[0] = u[1];
    if (env.right == Boundary::dirichlet) u[n - 1] = 0.0; else u[n - 1] = u[n - 2];
  };
  auto lap = [&](const std::vector<double>& u, int i) { return u[i + 1] - 2 * u[i] + u[i - 1]; };
  auto energy_of = [&](const std::vector<double>& um, const std::vector<double>& u,
                       const std::vector<double>& up, bool at_rest) {
    double kin = 0, pot = 0;
    for (int i = 1; i < n - 1; ++i) {
      const double v = at_rest ? 0.0 : (up[i] - um[i]) / (2 * dt);
      kin += v * v;
    }
    for (int i = 0; i < n - 1; ++i) {
      const double g = (u[i + 1] - u[i]) / dx;
      pot += g * g;
    }
    return 0.5 * dx * (kin + c * c * pot);
  };

  std::vector<double> prev = u0, cur(n), next(n);
  apply_bc(prev);
  cur = prev;
  for (int i = 1; i < n - 1; ++i) cur[i] = prev[i] + 0.5 * r2 * lap(prev, i);
  apply_bc(cur);
  std::copy(prev.begin(), prev.end(), tr.frame(0));
  if (energy) {
    energy->assign(1, energy_of(prev, prev, prev, true));
  }
  std::int64_t step = 1;
  for (std::int64_t j = 1; j < profile.frames; ++j) {
    for (; step < j * sub; ++step) {
      for (int i = 1; i < n - 1; ++i) next[i] = 2 * cur[i] - prev[i] + r2 * lap(cur, i);
      apply_bc(next);
      prev.swap(cur);
      cur.swap(next);
    }
    std::copy(cur.begin(), cur.end(), tr.frame(j));
    if (energy) {
      for (int i = 1; i < n - 1; ++i) next[i] = 2 * cur[i] - prev[i] + r2 * lap(cur, i);
      apply_bc(next);
      energy->push_back(energy_of(prev, cur, next, false));
    }
  }
  return tr;
}

void laplacian5(const double* u, double* out, int n, double h) {
  const double inv = 1.0 / (h * h);
  for (int i = 0; i < n; ++i) {
    const int ip = (i + 1) % n, im = (i + n - 1) % n;
    for (int j = 0; j < n; ++j) {
      const int jp = (j + 1) % n, jm = (j + n - 1) % n;
      out[i * n + j] = (u[ip * n + j] + u[im * n + j] + u[i * n + jp] + u[i * n + jm] - 4 * u[i * n + j]) * inv;
    }
  }
}

void arakawa_jacobian(const double* psi, const double* w, double* out, int n, double h) {
  // Row index i is y, column index j is x; J approximates psi_x w_y - psi_y w_x.
  const double inv = 1.0 / (12.0 * h * h);
  auto P = [&](int i, int j) { return psi[((i + n) % n) * n + (j + n) % n]; };
  auto W = [&](int i, int j) { return w[((i + n) % n) * n + (j + n) % n]; };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double j1 = (P(i, j + 1) - P(i, j - 1)) * (W(i + 1, j) - W(i - 1, j)) -
                        (P(i + 1, j) - P(i - 1, j)) * (W(i, j + 1) - W(i, j - 1));
      const double j2 = P(i, j + 1) * (W(i + 1, j + 1) - W(i - 1, j + 1)) -
                        P(i, j - 1) * (W(i + 1, j - 1) - W(i - 1, j - 1)) -
                        P(i + 1, j) * (W(i + 1, j + 1) - W(i + 1, j - 1)) +
                        P(i - 1, j) * (W(i - 1, j + 1) - W(i - 1, j - 1));
      const double j3 = W(i + 1, j) * (P(i + 1, j + 1) - P(i + 1, j - 1)) -
                        W(i - 1, j) * (P(i - 1, j + 1) - P(i - 1, j - 1)) -
                        W(i, j + 1) * (P(i + 1, j + 1) - P(i - 1, j + 1)) +
                        W(i, j - 1) * (P(i + 1, j - 1) - P(i - 1, j - 1));
      out[i * n + j] = (j1 + j2 + j3) * inv;
    }
  }
}

struct PoissonSolver::Impl {
  int n;
  RealFft fft;
  std::vector<double> inv_symbol;
  std::vector<cplx> spec;
  Impl(int n_, double h) : n(n_), fft({n_, n_}), inv_symbol(fft.spectrum_size()), spec(fft.spectrum_size()) {
    const int half = n / 2 + 1;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < half; ++j) {
        const double lam = (2 * std::cos(kTwoPi * i / n) + 2 * std::cos(kTwoPi * j / n) - 4) / (h * h);
        inv_symbol[i * half + j] = (i == 0 && j == 0) ? 0.0 : -1.0 / lam;
      }
    }
  }
};

PoissonSolver::PoissonSolver(int n, double h) : impl_(std::make_unique<Impl>(n, h)) {}
PoissonSolver::~PoissonSolver() = default;

void PoissonSolver::solve(const double* w, double* psi) {
  impl_->fft.forward(w, impl_->spec.data());
  for (std::size_t k = 0; k < impl_->spec.size(); ++k) impl_->spec[k] *= impl_->inv_symbol[k];
  impl_->fft.inverse(impl_->spec.data(), psi);
}

std::pair<double, double> vorticity_invariants(const std::vector<double>& w, int n, double h) {
  PoissonSolver poisson(n, h);
  std::vector<double> psi(w.size());
  poisson.solve(w.data(), psi.data());
  double e = 0, z = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    e += psi[i] * w[i];
    z += w[i] * w[i];
  }
  return {0.5 * e * h * h, 0.5 * z * h * h};
}

Trajectory solve_vorticity2d(const EnvironmentSpec& env, const std::vector<double>& w0,
                             const DatasetProfile& profile, double max_dt) {
  check_size(w0, profile, "solve_vorticity2d");
  const int n = static_cast<int>(profile.grid.at(0));
  const double h = profile.length / n;
  const double nu = env.param("nu");
  Trajectory tr = empty_trajectory(profile, h);
  const auto sub = static_cast<std::int64_t>(std::ceil(tr.dt_snapshot / max_dt - 1e-9));
  const double dt = tr.dt_snapshot / static_cast<double>(sub);
  PoissonSolver poisson(n, h);
  const std::size_t sz = w0.size();
  std::vector<double> psi(sz), jac(sz), lap(sz);
  auto rhs = [&](const std::vector<double>& w, std::vector<double>& out) {
    poisson.solve(w.data(), psi.data());
    arakawa_jacobian(psi.data(), w.data(), jac.data(), n, h);
    laplacian5(w.data(), lap.data(), n, h);
    out.resize(sz);
    for (std::size_t i = 0; i < sz; ++i) out[i] = -jac[i] + nu * lap[i];
  };
  std::vector<double> w = w0, k1, k2, k3, k4, tmp(sz);
  std::copy(w.begin(), w.end(), tr.frame(0));
  std::int64_t step = 0;
  for (std::int64_t j = 1; j < profile.frames; ++j) {
    for (std::int64_t s = 0; s < sub; ++s, ++step) {
      rhs(w, k1);
      for (std::size_t i = 0; i < sz; ++i) tmp[i] = w[i] + 0.5 * dt * k1[i];
      rhs(tmp, k2);
      for (std::size_t i = 0; i < sz; ++i) tmp[i] = w[i] + 0.5 * dt * k2[i];
      rhs(tmp, k3);
      for (std::size_t i = 0; i < sz; ++i) tmp[i] = w[i] + dt * k3[i];
      rhs(tmp, k4);
      for (std::size_t i = 0; i < sz; ++i) w[i] += dt / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
      if (!all_finite_below(w, 1e6)) {
        throw UnstableError("vorticity2d: non-finite state at step " + std::to_string(step + 1));
      }
    }
    std::copy(w.begin(), w.end(), tr.frame(j));
  }
  return tr;
}

namespace {

// Fourth-order second derivative along both axes with half-sample mirror
// ghost cells (zero normal derivative at the walls).
void wave2d_laplacian(const double* u, double* out, int n, double h) {
  auto mirror = [n](int i) {
    if (i < 0) return -i - 1;
    if (i >= n) return 2 * n - i - 1;
    return i;
  };
  const double inv = 1.0 / (12.0 * h * h);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = -60.0 * u[i * n + j];
      for (int d : {-2, -1, 1, 2}) {
        const double wgt = (d == -1 || d == 1) ? 16.0 : -1.0;
        acc += wgt * (u[mirror(i + d) * n + j] + u[i * n + mirror(j + d)]);
      }
      out[i * n + j] = acc * inv;
    }
  }
}

}  // namespace

Trajectory solve_wave2d(const EnvironmentSpec& env, const std::vector<double>& w0,
                        const DatasetProfile& profile, double max_dt, std::vector<double>* energy) {
  check_size(w0, profile, "solve_wave2d");
  const int n = static_cast<int>(profile.grid.at(0));
  const double h = profile.length / n;
  const double c = env.param("c"), damp = env.param("k");
  Trajectory tr = empty_trajectory(profile, h);
  const auto sub = static_cast<std::int64_t>(std::ceil(tr.dt_snapshot / max_dt - 1e-9));
  const double dt = tr.dt_snapshot / static_cast<double>(sub);
  const std::size_t sz = w0.size();
  std::vector<double> lap(sz);
  // State layout: [w, v].
  auto rhs = [&](const std::vector<double>& y, std::vector<double>& out) {
    out.resize(2 * sz);
    wave2d_laplacian(y.data(), lap.data(), n, h);
    for (std::size_t i = 0; i < sz; ++i) {
      out[i] = y[sz + i];
      out[sz + i] = c * c * lap[i] - damp * y[sz + i];
    }
  };
  auto energy_of = [&](const std::vector<double>& y) {
    wave2d_laplacian(y.data(), lap.data(), n, h);
    double e = 0;
    for (std::size_t i = 0; i < sz; ++i) e += 0.5 * y[sz + i] * y[sz + i] - 0.5 * c * c * y[i] * lap[i];
    return e * h * h;
  };
  std::vector<double> y(2 * sz, 0.0), k1, k2, k3, k4, tmp(2 * sz);
  std::copy(w0.begin(), w0.end(), y.begin());
  std::copy(w0.begin(), w0.end(), tr.frame(0));
  if (energy) energy->assign(1, energy_of(y));
  std::int64_t step = 0;
  for (std::int64_t j = 1; j < profile.frames; ++j) {
    for (std::int64_t s = 0; s < sub; ++s, ++step) {
      rhs(y, k1);
      for (std::size_t i = 0; i < 2 * sz; ++i) tmp[i] = y[i] + 0.5 * dt * k1[i];
      rhs(tmp, k2);
      for (std::size_t i = 0; i < 2 * sz; ++i) tmp[i] = y[i] + 0.5 * dt * k2[i];
      rhs(tmp, k3);
      for (std::size_t i = 0; i < 2 * sz; ++i) tmp[i] = y[i] + dt * k3[i];
      rhs(tmp, k4);
      for (std::size_t i = 0; i < 2 * sz; ++i) y[i] += dt / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
      if (!all_finite_below(y, 1e12)) {
        throw UnstableError("wave2d: non-finite state at step " + std::to_string(step + 1));
      }
    }
    std::copy(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(sz), tr.frame(j));
    if (energy) energy->push_back(energy_of(y));
  }
  return tr;
}

Trajectory solve(const EnvironmentSpec& env, const std::vector<double>& u0, const DatasetProfile& profile) {
  switch (env.family) {
    case Family::advection: return solve_advection(env, u0, profile);
    case Family::heat:
    case Family::burgers:
    case Family::combined: return solve_combined(env, u0, profile);
    case Family::wave_b: return solve_wave1d_boundary(env, u0, profile);
    case Family::vorticity2d: return solve_vorticity2d(env, u0, profile);
    case Family::wave2d: return solve_wave2d(env, u0, profile);
  }
  throw std::invalid_argument("unsupported family");
}

Trajectory generate_trajectory(const EnvironmentSpec& env, const DatasetProfile& profile,
                               std::uint64_t global_seed, std::int64_t traj_index) {
  constexpr int kMaxAttempts = 20;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::uint64_t ic_seed =
        num::hash_seed({global_seed, num::hash_string(family_name(env.family)),
                        static_cast<std::uint64_t>(env.env_index), static_cast<std::uint64_t>(traj_index),
                        static_cast<std::uint64_t>(attempt)});
    try {
      auto tr = solve(env, sample_initial_condition(env, ic_seed, profile), profile);
      tr.ic_seed = ic_seed;
      return tr;
    } catch (const UnstableError& e) {
      spdlog::warn("{} env {} traj {}: unstable ({}), resampling initial condition",
                   family_name(env.family), env.env_index, traj_index, e.what());
    }
  }
  throw UnstableError("no stable trajectory after " + std::to_string(kMaxAttempts) + " attempts");
}

}  // namespace zebra::pde
