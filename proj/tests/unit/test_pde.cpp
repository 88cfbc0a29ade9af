#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "doctest.h"
#include "zebra/num/checkpoint.hpp"
#include "zebra/num/rng.hpp"
#include "zebra/pde/dataset.hpp"
#include "zebra/pde/fft.hpp"
#include "zebra/pde/solvers.hpp"
#include "zebra/pde/symmetry.hpp"

using namespace zebra::pde;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

double rel_l2(const double* a, const double* b, std::size_t n) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

DatasetProfile profile_1d(int frames, double t_final, double length, std::int64_t n = 256) {
  DatasetProfile p;
  p.name = "test";
  p.frames = frames;
  p.grid = {n};
  p.t_final = t_final;
  p.length = length;
  return p;
}

EnvironmentSpec combined_env(double alpha, double beta, double gamma) {
  EnvironmentSpec e;
  e.family = Family::combined;
  e.params = {{"alpha", alpha}, {"beta", beta}, {"gamma", gamma}};
  return e;
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("zebra_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("environment sampling") {
  auto a = sample_environment(Family::advection, 3, 7);
  auto b = sample_environment(Family::advection, 3, 7);
  CHECK(a.to_json() == b.to_json());
  for (int i = 0; i < 200; ++i) {
    const double beta = sample_environment(Family::advection, i, 11).param("beta");
    CHECK(beta >= 0.0);
    CHECK(beta <= 4.0);
  }
  std::set<std::pair<Boundary, Boundary>> combos;
  for (int i = 0; i < 4; ++i) {
    auto e = sample_environment(Family::wave_b, i, 1);
    CHECK(e.left != Boundary::periodic);
    CHECK(e.right != Boundary::periodic);
    combos.insert({e.left, e.right});
  }
  CHECK(combos.size() == 4);
  CHECK_THROWS_AS(parse_family("kdv"), std::invalid_argument);
  for (int i = 0; i < 50; ++i) {
    auto h = sample_environment(Family::heat, i, 5);
    CHECK(h.param("beta") >= 1e-3);
    CHECK(h.param("beta") <= 5.0);
    REQUIRE(h.forcing.size() == 5);
    for (const auto& m : h.forcing) {
      CHECK(std::abs(m.amplitude) <= 0.5);
      CHECK(std::abs(m.omega) <= 0.4);
      CHECK(m.ell >= 1);
      CHECK(m.ell <= 3);
    }
    auto c = sample_environment(Family::combined, i, 5);
    CHECK(c.param("alpha") <= 1.0);
    CHECK(c.param("beta") <= 0.4);
    CHECK(c.param("gamma") <= 1.0);
    auto v = sample_environment(Family::vorticity2d, i, 5).param("nu");
    CHECK(v >= 1e-3);
    CHECK(v <= 1e-2);
    auto w = sample_environment(Family::wave2d, i, 5);
    CHECK(w.param("c") <= 50.0);
    CHECK(w.param("k") >= 100.0);
    CHECK(w.param("k") <= 500.0);
  }
  auto round = EnvironmentSpec::from_json(sample_environment(Family::burgers, 2, 3).to_json());
  CHECK(round.to_json() == sample_environment(Family::burgers, 2, 3).to_json());
}

TEST_CASE("initial conditions") {
  auto prof = make_profile(Family::advection, "tiny");
  auto env = sample_environment(Family::advection, 0, 1);
  auto u0 = sample_initial_condition(env, 42, prof);
  // Sine sum with wavenumbers 1..3 only: the grid signal is periodic and its
  // spectrum vanishes outside those modes.
  RealFft fft({256});
  std::vector<cplx> spec(fft.spectrum_size());
  fft.forward(u0.data(), spec.data());
  double outside = 0, inside = 0;
  for (std::size_t m = 0; m < spec.size(); ++m) (m >= 1 && m <= 3 ? inside : outside) += std::norm(spec[m]);
  CHECK(outside < 1e-20 * inside);

  auto w2 = make_profile(Family::wave2d, "tiny");
  for (double v : sample_initial_condition(sample_environment(Family::wave2d, 0, 1), 3, w2)) CHECK(v >= 0.0);

  auto vp = make_profile(Family::vorticity2d, "tiny");
  auto w = sample_initial_condition(sample_environment(Family::vorticity2d, 0, 1), 9, vp);
  double mean = 0, ms = 0;
  for (double v : w) {
    mean += v;
    ms += v * v;
  }
  CHECK(std::abs(mean / w.size()) < 1e-10);
  CHECK(std::sqrt(ms / w.size()) == doctest::Approx(1.0));
}

TEST_CASE("advection matches characteristics") {
  const double L = 128.0;
  auto prof = profile_1d(5, 100.0, L);
  std::vector<double> u0(256);
  for (int i = 0; i < 256; ++i) u0[i] = std::sin(2 * kPi * (L * i / 256) / L);
  EnvironmentSpec env;
  env.params["beta"] = 0.0;
  auto still = solve_advection(env, u0, prof);
  for (int t = 0; t < 5; ++t) CHECK(rel_l2(still.frame(t), u0.data(), 256) < 1e-14);

  env.params["beta"] = 1.0;
  auto tr = solve_advection(env, u0, prof);
  std::vector<double> exact(256);
  for (int i = 0; i < 256; ++i) exact[i] = std::sin(2 * kPi * (L * i / 256 - 25.0) / L);
  CHECK(rel_l2(tr.frame(1), exact.data(), 256) < 1e-10);

  env.params["beta"] = L / 100.0;
  auto wrap = solve_advection(env, u0, prof);
  CHECK(rel_l2(wrap.frame(4), u0.data(), 256) < 1e-10);
}

TEST_CASE("heat eigenmode decay") {
  const double L = 16.0, beta = 0.1;
  auto prof = profile_1d(5, 4.0, L);
  std::vector<double> u0(256);
  for (int i = 0; i < 256; ++i) u0[i] = std::sin(2 * kPi * (L * i / 256) / L);
  auto tr = solve_combined(combined_env(0, beta, 0), u0, prof);
  const double decay = std::exp(-beta * std::pow(2 * kPi / L, 2) * 4.0);
  std::vector<double> exact(256);
  for (int i = 0; i < 256; ++i) exact[i] = decay * u0[i];
  CHECK(rel_l2(tr.frame(4), exact.data(), 256) < 1e-3);
}

TEST_CASE("combined equation conserves the mean") {
  auto prof = make_profile(Family::combined, "tiny");
  for (auto [a, b, g] : {std::tuple{0.7, 0.2, 0.5}, std::tuple{1.0, 0.05, 0.0}, std::tuple{0.3, 0.4, 1.0}}) {
    auto env = combined_env(a, b, g);
    auto u0 = sample_initial_condition(env, 17, prof);
    for (auto& v : u0) v += 0.3;
    auto tr = solve_combined(env, u0, prof);
    auto mean = [&](std::int64_t t) {
      double s = 0;
      for (std::int64_t i = 0; i < tr.frame_size; ++i) s += tr.frame(t)[i];
      return s / tr.frame_size;
    };
    for (std::int64_t t = 1; t < tr.frames; ++t) CHECK(std::abs(mean(t) - mean(0)) < 1e-8);
  }
}

TEST_CASE("forced heat satisfies the PDE on stored frames") {
  auto prof = make_profile(Family::heat, "tiny");
  auto env = sample_environment(Family::heat, 0, 3);
  env.params["beta"] = 0.05;
  auto tr = solve_combined(env, sample_initial_condition(env, 5, prof), prof);
  const int n = 256;
  const double L = prof.length, dt = tr.dt_snapshot;
  RealFft fft({n});
  std::vector<cplx> spec(fft.spectrum_size());
  double num = 0, den = 0;
  for (std::int64_t t = 2; t + 2 < tr.frames; ++t) {
    std::vector<double> ut(n), uxx(n);
    for (int i = 0; i < n; ++i) {
      ut[i] = (-tr.frame(t + 2)[i] + 8 * tr.frame(t + 1)[i] - 8 * tr.frame(t - 1)[i] + tr.frame(t - 2)[i]) / (12 * dt);
    }
    fft.forward(tr.frame(t), spec.data());
    for (int m = 0; m <= n / 2; ++m) spec[m] *= -std::pow(2 * kPi * m / L, 2);
    fft.inverse(spec.data(), uxx.data());
    const double time = t * dt;
    for (int i = 0; i < n; ++i) {
      double force = 0;
      for (const auto& f : env.forcing) force += f.amplitude * std::sin(f.omega * time + 2 * kPi * f.ell * (L * i / n) / L + f.phase);
      const double rhs = env.param("beta") * uxx[i] + force;
      num += (ut[i] - rhs) * (ut[i] - rhs);
      den += rhs * rhs;
    }
  }
  CHECK(std::sqrt(num / den) < 1e-2);
}

TEST_CASE("wave with boundaries") {
  auto prof = make_profile(Family::wave_b, "tiny");
  for (int idx = 0; idx < 4; ++idx) {
    auto env = sample_environment(Family::wave_b, idx, 2);
    std::vector<double> energy;
    auto tr = solve_wave1d_boundary(env, sample_initial_condition(env, 8, prof), prof, {}, &energy);
    const auto n = tr.frame_size;
    for (std::int64_t t = 0; t < tr.frames; ++t) {
      const double* u = tr.frame(t);
      if (env.left == Boundary::dirichlet) CHECK(std::abs(u[0]) < 1e-10);
      else CHECK(std::abs(u[1] - u[0]) / tr.dx < 1e-6);
      if (env.right == Boundary::dirichlet) CHECK(std::abs(u[n - 1]) < 1e-10);
      else CHECK(std::abs(u[n - 1] - u[n - 2]) / tr.dx < 1e-6);
    }
    REQUIRE(energy.size() == static_cast<std::size_t>(tr.frames));
    for (double e : energy) CHECK(std::abs(e - energy[0]) / energy[0] < 1e-2);
  }
  auto env = sample_environment(Family::wave_b, 0, 2);
  CHECK_THROWS_AS(solve_wave1d_boundary(env, sample_initial_condition(env, 8, prof), prof, {.cfl = 0.8}),
                  std::invalid_argument);
}

TEST_CASE("vorticity operators") {
  const int n = 32;
  const double h = 2 * kPi / n;
  zebra::num::Rng rng(4);
  std::vector<double> w(n * n), psi(n * n), lap(n * n);
  double mean = 0;
  for (auto& v : w) mean += (v = rng.normal());
  for (auto& v : w) v -= mean / (n * n);
  PoissonSolver poisson(n, h);
  poisson.solve(w.data(), psi.data());
  laplacian5(psi.data(), lap.data(), n, h);
  double num = 0, den = 0;
  for (int i = 0; i < n * n; ++i) {
    num += (lap[i] + w[i]) * (lap[i] + w[i]);
    den += w[i] * w[i];
  }
  CHECK(std::sqrt(num / den) < 1e-8);

  // Constant field: Jacobian and Laplacian vanish, so the state is frozen.
  DatasetProfile prof;
  prof.name = "test";
  prof.frames = 3;
  prof.grid = {n, n};
  prof.t_final = 0.05;
  prof.length = 2 * kPi;
  EnvironmentSpec env;
  env.family = Family::vorticity2d;
  env.params["nu"] = 5e-3;
  std::vector<double> flat(n * n, 0.7);
  auto tr = solve_vorticity2d(env, flat, prof);
  for (int i = 0; i < n * n; ++i) CHECK(std::abs(tr.frame(2)[i] - 0.7) < 1e-12);
}

TEST_CASE("inviscid Arakawa integration conserves energy and enstrophy") {
  auto prof = make_profile(Family::vorticity2d, "tiny");
  const int n = 64;
  const double h = prof.length / n;
  EnvironmentSpec env = sample_environment(Family::vorticity2d, 0, 1);
  env.params["nu"] = 0.0;
  auto w0 = sample_initial_condition(env, 21, prof);
  prof.frames = 2;
  prof.t_final = 0.1;
  auto tr = solve_vorticity2d(env, w0, prof, 1e-3);
  auto [e0, z0] = vorticity_invariants(w0, n, h);
  std::vector<double> w1(tr.frame(1), tr.frame(1) + tr.frame_size);
  auto [e1, z1] = vorticity_invariants(w1, n, h);
  CHECK(std::abs(e1 - e0) / std::abs(e0) < 1e-4);
  CHECK(std::abs(z1 - z0) / std::abs(z0) < 1e-4);
  CHECK(rel_l2(tr.frame(1), w0.data(), w0.size()) > 1e-3);
}

TEST_CASE("damped wave 2D") {
  auto prof = make_profile(Family::wave2d, "tiny");
  auto env = sample_environment(Family::wave2d, 0, 1);
  auto w0 = sample_initial_condition(env, 3, prof);

  env.params = {{"c", 0.0}, {"k", 0.0}};
  auto still = solve_wave2d(env, w0, prof);
  for (std::int64_t t = 0; t < still.frames; ++t) CHECK(rel_l2(still.frame(t), w0.data(), w0.size()) == 0.0);

  env.params = {{"c", 30.0}, {"k", 0.0}};
  std::vector<double> energy;
  solve_wave2d(env, w0, prof, 6.25e-6, &energy);
  for (double e : energy) CHECK(std::abs(e - energy[0]) / energy[0] < 1e-2);

  env.params = {{"c", 5.0}, {"k", 500.0}};
  solve_wave2d(env, w0, prof, 6.25e-6, &energy);
  for (std::size_t i = 1; i < energy.size(); ++i) CHECK(energy[i] <= energy[i - 1]);
}

TEST_CASE("dataset generation is deterministic and thread independent") {
  auto prof = make_profile(Family::advection, "tiny");
  auto d1 = temp_dir("gen1"), d2 = temp_dir("gen2");
  generate_dataset(Family::advection, prof, 7, d1, {.threads = 1, .config = {}});
  generate_dataset(Family::advection, prof, 7, d2, {.threads = 3, .config = {}});
  CHECK(zebra::num::read_bytes(d1 / "data.bin") == zebra::num::read_bytes(d2 / "data.bin"));
  CHECK(zebra::num::read_bytes(d1 / "meta.json") == zebra::num::read_bytes(d2 / "meta.json"));
  auto ds = Dataset::open(d1);
  CHECK(ds.n_envs() == 6);
  CHECK(ds.train().envs.size() == 4);
  CHECK(ds.test().envs.front() == 4);
  CHECK(ds.norm_scale() > 0.0);
  auto env = ds.environment(5);
  auto tr = generate_trajectory(env, prof, 7, 2);
  const float* stored = ds.frame(5, 2, 3);
  for (std::int64_t i = 0; i < tr.frame_size; ++i) CHECK(stored[i] == static_cast<float>(tr.frame(3)[i]));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("test environments may hold more trajectories than train ones") {
  auto prof = make_profile(Family::advection, "tiny");
  prof.test_traj_per_env = 5;
  auto dir = temp_dir("gen_split");
  generate_dataset(Family::advection, prof, 3, dir);
  auto ds = Dataset::open(dir);
  CHECK(ds.traj_per_env() == 5);
  CHECK(ds.train().traj_count() == 3);
  CHECK(ds.test().traj_count() == 5);
  auto norm = [&](std::int64_t e, std::int64_t j) {
    double s = 0;
    for (float v : ds.trajectory(e, j)) s += v * v;
    return s;
  };
  CHECK(norm(0, 4) == 0.0);
  CHECK(norm(0, 2) > 0.0);
  CHECK(norm(5, 4) > 0.0);
  fs::remove_all(dir);
}

TEST_CASE("desk and paper profiles") {
  auto desk = make_profile(Family::advection, "desk");
  CHECK(desk.n_train_envs == 64);
  CHECK(desk.n_test_envs == 8);
  CHECK(desk.traj_per_env == 4);
  CHECK(desk.stored_traj_per_env() == 10);
  auto paper = make_profile(Family::advection, "paper");
  CHECK(paper.n_train_envs == 1200);
  CHECK(paper.n_test_envs == 12);
  CHECK(paper.traj_per_env == 10);
  CHECK(make_profile(Family::vorticity2d, "paper").n_test_envs == 120);
  CHECK_THROWS_AS(make_profile(Family::advection, "huge"), std::invalid_argument);
}

TEST_CASE("symmetry sets per family") {
  auto env = sample_environment(Family::advection, 0, 1);
  auto s = symmetries(env, 1);
  CHECK(s.shift_axes == std::vector<int>{0});
  CHECK(s.negate);
  CHECK_FALSE(symmetries(sample_environment(Family::heat, 0, 1), 1).any());  // forced
  s = symmetries(sample_environment(Family::burgers, 0, 1), 1);
  CHECK_FALSE(s.any());
  s = symmetries(sample_environment(Family::combined, 0, 1), 1);
  CHECK(s.shift_axes == std::vector<int>{0});
  CHECK_FALSE(s.negate);
  s = symmetries(sample_environment(Family::wave_b, 0, 1), 1);
  CHECK(s.shift_axes.empty());
  CHECK(s.negate);
  s = symmetries(sample_environment(Family::vorticity2d, 0, 1), 2);
  CHECK(s.shift_axes == std::vector<int>{0, 1});
  CHECK_FALSE(s.negate);
}

TEST_CASE("random symmetry shifts every frame alike") {
  const std::vector<std::int64_t> grid = {3, 4};
  Symmetries s;
  s.shift_axes = {0, 1};
  std::set<std::pair<int, int>> seen;
  for (std::uint64_t seed = 0; seed < 64; ++seed) {
    std::vector<float> traj(2 * 12);
    for (int i = 0; i < 24; ++i) traj[i] = static_cast<float>(i);
    zebra::num::Rng rng(seed);
    apply_random_symmetry(s, grid, traj, rng);
    // Recover the shift from the first frame and check both frames.
    const int v = static_cast<int>(traj[0]);
    const int sy = (3 - v / 4) % 3, sx = (4 - v % 4) % 4;
    seen.insert({sy, sx});
    for (int t = 0; t < 2; ++t)
      for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 4; ++x)
          CHECK(traj[t * 12 + y * 4 + x] == static_cast<float>(t * 12 + ((y - sy + 3) % 3) * 4 + (x - sx + 4) % 4));
  }
  CHECK(seen.size() == 12);
}

TEST_CASE("symmetries commute with the solvers") {
  struct Case {
    Family family;
    double tol;
  };
  for (const auto& c : {Case{Family::advection, 1e-5}, Case{Family::combined, 1e-5}, Case{Family::wave_b, 1e-5},
                        Case{Family::vorticity2d, 1e-4}}) {
    CAPTURE(family_name(c.family));
    auto prof = make_profile(c.family, "tiny");
    if (c.family == Family::vorticity2d) prof.grid = {32, 32};
    const auto env = sample_environment(c.family, 1, 3);
    const auto sym = symmetries(env, static_cast<int>(prof.grid.size()));
    REQUIRE(sym.any());
    // Both runs start from float values so the IC rounding is identical.
    auto u0 = sample_initial_condition(env, 11, prof);
    for (auto& v : u0) v = static_cast<float>(v);
    const auto base = solve(env, u0, prof);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      std::vector<float> ic(u0.begin(), u0.end()), whole(base.values.begin(), base.values.end());
      zebra::num::Rng r1(seed), r2(seed);
      apply_random_symmetry(sym, prof.grid, ic, r1);
      apply_random_symmetry(sym, prof.grid, whole, r2);
      const auto moved = solve(env, std::vector<double>(ic.begin(), ic.end()), prof);
      std::vector<double> expect(whole.begin(), whole.end());
      CHECK(rel_l2(moved.values.data(), expect.data(), expect.size()) < c.tol);
    }
  }
}
