// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/eval/metrics.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "zebra/num/rng.hpp"
#include "zebra/pde/solvers.hpp"

namespace zebra::eval {

double relative_l2(std::span<const float> pred, std::span<const float> truth) {
  if (pred.size() != truth.size()) {
    throw std::invalid_argument("relative_l2: size mismatch (" + std::to_string(pred.size()) + " vs " +
                                std::to_string(truth.size()) + ")");
  }
  double num = 0, den = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - truth[i];
    num += d * d;
    den += static_cast<double>(truth[i]) * truth[i];
  }
  if (den == 0) throw std::invalid_argument("relative_l2: truth has zero norm");
  return std::sqrt(num / den);
}

UqSummary uq_stats(const std::vector<std::span<const float>>& samples, std::span<const float> truth, double width) {
  const auto S = samples.size();
  if (S < 2) throw std::invalid_argument("uq_stats: need at least two samples");
  const auto n = truth.size();
  for (const auto& s : samples)
    if (s.size() != n) throw std::invalid_argument("uq_stats: sample size mismatch");
  UqSummary out;
  out.samples = static_cast<int>(S);
  out.width = width;
  out.mean.assign(n, 0.0);
  out.std.assign(n, 0.0);
  for (const auto& s : samples)
    for (std::size_t i = 0; i < n; ++i) out.mean[i] += s[i];
  for (auto& m : out.mean) m /= static_cast<double>(S);
  for (const auto& s : samples)
    for (std::size_t i = 0; i < n; ++i) {
      const double d = s[i] - out.mean[i];
      out.std[i] += d * d;
    }
  double std_sq = 0, mean_sq = 0;
  std::size_t inside = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out.std[i] = std::sqrt(out.std[i] / static_cast<double>(S - 1));
    std_sq += out.std[i] * out.std[i];
    mean_sq += out.mean[i] * out.mean[i];
    const double lo = out.mean[i] - width * out.std[i], hi = out.mean[i] + width * out.std[i];
    if (truth[i] >= lo && truth[i] <= hi) ++inside;
  }
  out.relative_std = mean_sq > 0 ? std::sqrt(std_sq / mean_sq) : (std_sq > 0 ? std::numeric_limits<double>::infinity() : 0.0);
  out.confidence_level = n > 0 ? static_cast<double>(inside) / static_cast<double>(n) : 1.0;
  return out;
}

FidelityDiversity fidelity_diversity(const std::vector<std::span<const float>>& generated, std::int64_t frames,
                                     const pde::EnvironmentSpec& env, const pde::DatasetProfile& profile) {
  if (frames < 1 || frames > profile.frames) throw std::invalid_argument("fidelity: frame count outside the profile");
  const auto fs = static_cast<std::size_t>(profile.frame_size());
  FidelityDiversity out;
  out.samples = static_cast<int>(generated.size());
  double fid_sum = 0;
  for (const auto& g : generated) {
    if (g.size() != fs * static_cast<std::size_t>(frames)) throw std::invalid_argument("fidelity: sample size mismatch");
    const std::vector<double> u0(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(fs));
    double err = std::numeric_limits<double>::quiet_NaN();
    try {
      const auto sol = pde::solve(env, u0, profile);
      std::vector<float> ref(sol.values.begin(), sol.values.begin() + static_cast<std::ptrdiff_t>(fs * frames));
      bool finite = true;
      for (float v : ref) finite = finite && std::isfinite(v);
      if (finite) err = relative_l2(g, ref);
    } catch (const std::exception& e) {
      spdlog::warn("re-solution failed: {}", e.what());
    }
    out.per_sample.push_back(err);
    if (std::isfinite(err)) {
      fid_sum += err;
      ++out.solved;
    } else {
      ++out.failed;
    }
  }
  out.fidelity = out.solved > 0 ? fid_sum / out.solved : std::numeric_limits<double>::quiet_NaN();

  std::size_t pairs = 0;
  for (std::size_t a = 0; a < generated.size(); ++a)
    for (std::size_t b = a + 1; b < generated.size(); ++b) {
      double d2 = 0, na = 0, nb = 0;
      for (std::size_t i = 0; i < generated[a].size(); ++i) {
        const double x = generated[a][i], y = generated[b][i];
        d2 += (x - y) * (x - y);
        na += x * x;
        nb += y * y;
      }
      const double scale = std::sqrt((na + nb) / 2);
      out.diversity += scale > 0 ? std::sqrt(d2) / scale : 0.0;
      out.diversity_l2 += std::sqrt(d2);
      out.diversity_rms += std::sqrt(d2 / static_cast<double>(generated[a].size()));
      ++pairs;
    }
  if (pairs > 0) {
    out.diversity /= static_cast<double>(pairs);
    out.diversity_l2 /= static_cast<double>(pairs);
    out.diversity_rms /= static_cast<double>(pairs);
  }
  return out;
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double normalize(std::vector<double>& v) {
  const double n = std::sqrt(dot(v, v));
  if (n > 0)
    for (auto& x : v) x /= n;
  return n;
}

// Power iteration on a PSD operator, orthogonal to `found`.
template <typename Apply>
std::pair<double, std::vector<double>> power_iterate(Apply apply, std::size_t n,
                                                      const std::vector<std::vector<double>>& found, double tol,
                                                      int max_iter, std::uint64_t seed) {
  num::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  auto project = [&](std::vector<double>& x) {
    for (const auto& f : found) {
      const double c = dot(x, f);
      for (std::size_t i = 0; i < n; ++i) x[i] -= c * f[i];
    }
  };
  project(v);
  normalize(v);
  double lambda = 0;
  for (int it = 0; it < max_iter; ++it) {
    std::vector<double> w = apply(v);
    project(w);
    lambda = normalize(w);
    if (lambda == 0) return {0.0, v};
    double diff = 0;
    for (std::size_t i = 0; i < n; ++i) diff += (w[i] - v[i]) * (w[i] - v[i]);
    v = std::move(w);
    if (std::sqrt(diff) < tol) break;
  }
  // Rayleigh quotient is second-order accurate in the vector error.
  const auto av = apply(v);
  return {dot(v, av), v};
}

}  // namespace

Eigenpairs top_eigenpairs(std::span<const double> matrix, std::int64_t n, int k, double tol, int max_iter) {
  if (static_cast<std::int64_t>(matrix.size()) != n * n) throw std::invalid_argument("top_eigenpairs: not n x n");
  const auto N = static_cast<std::size_t>(n);
  auto apply = [&](const std::vector<double>& v) {
    std::vector<double> w(N, 0.0);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) w[i] += matrix[i * N + j] * v[j];
    return w;
  };
  Eigenpairs out;
  for (int c = 0; c < k; ++c) {
    auto [lambda, v] = power_iterate(apply, N, out.vectors, tol, max_iter, 1000 + c);
    out.values.push_back(lambda);
    out.vectors.push_back(std::move(v));
  }
  return out;
}

Pca2 pca2(const std::vector<std::span<const float>>& fields, double tol, int max_iter) {
  const auto N = fields.size();
  if (N < 3) throw std::invalid_argument("pca2: need at least three fields");
  const auto D = fields[0].size();
  for (const auto& f : fields)
    if (f.size() != D) throw std::invalid_argument("pca2: fields differ in size");
  Pca2 out;
  out.mean.assign(D, 0.0);
  for (const auto& f : fields)
    for (std::size_t i = 0; i < D; ++i) out.mean[i] += f[i];
  for (auto& m : out.mean) m /= static_cast<double>(N);
  std::vector<std::vector<double>> X(N, std::vector<double>(D));
  for (std::size_t r = 0; r < N; ++r)
    for (std::size_t i = 0; i < D; ++i) X[r][i] = fields[r][i] - out.mean[i];
  auto apply = [&](const std::vector<double>& v) {
    std::vector<double> w(D, 0.0);
    for (const auto& row : X) {
      const double c = dot(row, v) / static_cast<double>(N - 1);
      for (std::size_t i = 0; i < D; ++i) w[i] += c * row[i];
    }
    return w;
  };
  for (int c = 0; c < 2; ++c) {
    auto [lambda, v] = power_iterate(apply, D, out.components, tol, max_iter, 2000 + c);
    out.eigenvalues[c] = lambda;
    out.components.push_back(std::move(v));
  }
  if (out.eigenvalues[1] <= 1e-12 * std::max(out.eigenvalues[0], 1e-300)) {
    spdlog::warn("pca2: data has rank < 2; second coordinate set to zero");
    out.rank_deficient = true;
    out.eigenvalues[1] = 0;
    std::fill(out.components[1].begin(), out.components[1].end(), 0.0);
  }
  for (const auto& row : X) out.coords.push_back({dot(row, out.components[0]), dot(row, out.components[1])});
  return out;
}

}  // namespace zebra::eval
