// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "zebra/pde/environment.hpp"

namespace zebra::eval {

/// ||pred - truth|| / ||truth|| over all values. Throws std::invalid_argument
/// on a size mismatch or a zero-norm truth.
double relative_l2(std::span<const float> pred, std::span<const float> truth);

struct UqSummary {
  std::vector<double> mean;
  /// Unbiased (S - 1) pointwise standard deviation.
  std::vector<double> std;
  double relative_std = 0;
  double confidence_level = 0;
  double width = 3.0;
  int samples = 0;
};

/// Pointwise two-pass mean and std over samples; relative_std =
/// ||std|| / ||mean||; confidence_level = fraction of points whose truth
/// lies in [mean - width*std, mean + width*std]. Needs S >= 2.
UqSummary uq_stats(const std::vector<std::span<const float>>& samples, std::span<const float> truth,
                   double width = 3.0);

struct FidelityDiversity {
  /// Mean rel L2 between each generated trajectory and the solver run from
  /// its own first frame, over samples whose re-solution succeeded.
  double fidelity = 0;
  /// Mean over unordered pairs of ||a - b|| / sqrt((||a||^2 + ||b||^2) / 2).
  double diversity = 0;
  /// Mean over unordered pairs of ||a - b||.
  double diversity_l2 = 0;
  /// Mean over unordered pairs of the root-mean-square pointwise difference.
  double diversity_rms = 0;
  int samples = 0;
  int solved = 0;
  int failed = 0;
  std::vector<double> per_sample;  // NaN for failed samples
};

/// `generated` holds trajectories of `frames` frames each in physical units.
FidelityDiversity fidelity_diversity(const std::vector<std::span<const float>>& generated, std::int64_t frames,
                                     const pde::EnvironmentSpec& env, const pde::DatasetProfile& profile);

struct Pca2 {
  std::vector<std::array<double, 2>> coords;
  std::array<double, 2> eigenvalues{};
  std::vector<double> mean;
  std::vector<std::vector<double>> components;
  bool rank_deficient = false;
};

/// Top-two principal components of mean-centred fields by power iteration
/// with deflation on the covariance, applied implicitly as X^T X v / (N - 1).
/// Needs at least 3 fields.
Pca2 pca2(const std::vector<std::span<const float>>& fields, double tol = 1e-9, int max_iter = 1000);

struct Eigenpairs {
  std::vector<double> values;
  std::vector<std::vector<double>> vectors;
};

/// Leading k eigenpairs of a symmetric positive semidefinite matrix
/// (row-major n x n) by power iteration with deflation.
Eigenpairs top_eigenpairs(std::span<const double> matrix, std::int64_t n, int k, double tol = 1e-9,
                          int max_iter = 1000);

}  // namespace zebra::eval
