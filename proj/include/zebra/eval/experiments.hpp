// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "zebra/eval/metrics.hpp"
#include "zebra/infer/engine.hpp"
#include "zebra/pde/dataset.hpp"
#include "zebra/seq/sequence.hpp"

namespace zebra::eval {

/// Shared settings for the test-set experiments. Every rollout starts at
/// frame 0 and covers `window` frames: the initial condition plus
/// window - 1 generated frames, scored against the solver frames.
struct EvalSettings {
  std::int64_t window = 9;
  double temperature = 0.1;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Test trajectories by (env, traj) together with the physical data.
class TestSet {
 public:
  TestSet(const pde::Dataset& data, std::vector<seq::TokenTrajectory> pool);

  const pde::Dataset& data() const { return *data_; }
  std::vector<std::int64_t> envs() const;
  /// Trajectory indices stored for env, in increasing order.
  const std::vector<std::int64_t>& trajectories(std::int64_t env) const;
  const seq::TokenTrajectory& tokens(std::int64_t env, std::int64_t traj) const;

 private:
  const pde::Dataset* data_;
  std::vector<seq::TokenTrajectory> pool_;
  std::map<std::int64_t, std::vector<std::int64_t>> by_env_;
  std::map<std::pair<std::int64_t, std::int64_t>, std::size_t> index_;
};

struct ShotRow {
  std::int64_t env = 0;
  std::int64_t target = 0;
  std::int64_t context = 0;
  double adaptive = 0;  // n = 1 example + initial condition
  double temporal = 0;  // initial condition only
};

struct ShotComparison {
  std::vector<ShotRow> rows;
  double mean_adaptive = 0;
  double mean_temporal = 0;
  double win_rate = 0;  // fraction of envs where adaptive < temporal
  void write_csv(const std::filesystem::path& path) const;
  nlohmann::json summary() const;
};

/// Zero-shot (temporal, one frame) against one-shot (adaptive, n = 1) on a
/// seeded target/context pair per test environment.
ShotComparison compare_zero_one_shot(const infer::Engine& engine, const TestSet& test, const EvalSettings& s);

struct SweepRow {
  std::uint64_t seed = 0;
  int n = 0;
  std::int64_t env = 0;
  std::int64_t target = 0;
  double rel_l2 = 0;
};

struct ContextSweep {
  std::vector<SweepRow> rows;
  /// Mean rel L2 per n (index n - 1), averaged over seeds and envs.
  std::vector<double> mean_by_n;
  std::vector<int> count_by_n;
  int skipped = 0;
  void write_csv(const std::filesystem::path& path) const;
  void write_summary_csv(const std::filesystem::path& path) const;
  nlohmann::json summary() const;
};

/// Adaptive rollouts for every n in `ns` and seed. For one (seed, env) the
/// target is fixed and contexts are nested prefixes of one seeded
/// permutation of the remaining trajectories. Environments with fewer than
/// n + 1 trajectories are skipped with a warning.
ContextSweep context_sweep(const infer::Engine& engine, const TestSet& test, const std::vector<int>& ns,
                           const std::vector<std::uint64_t>& seeds, const EvalSettings& s);

struct UqRow {
  std::int64_t env = 0;
  std::int64_t target = 0;
  double temperature = 0;
  double relative_std = 0;
  double confidence_level = 0;
  double rel_l2_mean = 0;  // rel L2 of the sample mean
};

struct UqExperiment {
  std::vector<UqRow> rows;
  std::vector<double> temperatures;
  std::vector<double> mean_relative_std;
  std::vector<double> mean_confidence;
  int samples = 0;
  void write_csv(const std::filesystem::path& path) const;
  nlohmann::json summary() const;
};

/// S one-shot samples per test environment at each temperature, on the same
/// prompts, summarised with uq_stats over the generated frames.
UqExperiment uq_experiment(const infer::Engine& engine, const TestSet& test, const std::vector<double>& temperatures,
                           int samples, const EvalSettings& s);

struct GenerativeRow {
  std::int64_t env = 0;
  std::int64_t context = 0;
  FidelityDiversity stats;
};

struct GenerativeAnalysis {
  std::vector<GenerativeRow> rows;
  double fidelity = 0;
  double diversity = 0;
  double diversity_l2 = 0;
  double diversity_rms = 0;
  double finite_fraction = 0;
  /// PCA of generated and real initial conditions of the first environment.
  std::vector<std::array<double, 2>> pca_coords;
  std::vector<std::string> pca_labels;
  void write_csv(const std::filesystem::path& path) const;
  void write_pca_csv(const std::filesystem::path& path) const;
  nlohmann::json summary() const;
};

/// Free generation of `samples` trajectories per test environment from one
/// example, scored by re-solving each generated initial condition with the
/// environment's true parameters.
GenerativeAnalysis analyze_generation(const infer::Engine& engine, const TestSet& test, int samples,
                                      double temperature, const EvalSettings& s);

}  // namespace zebra::eval
