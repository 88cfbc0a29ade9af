// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <vector>

#include "zebra/pde/environment.hpp"
#include "zebra/pde/solvers.hpp"

namespace zebra::pde {

/// Environment/trajectory ranges of one split.
struct Split {
  std::vector<std::int64_t> envs;
  std::int64_t traj_begin = 0;
  std::int64_t traj_end = 0;

  std::int64_t traj_count() const { return traj_end - traj_begin; }
};

/// On-disk dataset: meta.json, params.json and data.bin holding f32 LE
/// values shaped [env, traj, T, C, spatial...] with C = 1.
class Dataset {
 public:
  static Dataset open(const std::filesystem::path& dir);

  const nlohmann::json& meta() const { return meta_; }
  Family family() const { return family_; }
  const DatasetProfile& profile() const { return profile_; }
  double norm_scale() const { return norm_scale_; }
  const Split& train() const { return train_; }
  const Split& test() const { return test_; }
  const std::filesystem::path& dir() const { return dir_; }

  std::int64_t n_envs() const { return profile_.n_envs(); }
  std::int64_t traj_per_env() const { return profile_.stored_traj_per_env(); }
  std::int64_t frames() const { return profile_.frames; }
  std::int64_t frame_size() const { return profile_.frame_size(); }

  /// Physical-unit values of one stored frame.
  const float* frame(std::int64_t env, std::int64_t traj, std::int64_t t) const;
  /// Whole trajectory [T * frame_size] in physical units.
  std::vector<float> trajectory(std::int64_t env, std::int64_t traj) const;
  const EnvironmentSpec& environment(std::int64_t env) const { return envs_.at(static_cast<std::size_t>(env)); }

 private:
  std::filesystem::path dir_;
  nlohmann::json meta_;
  Family family_ = Family::advection;
  DatasetProfile profile_;
  double norm_scale_ = 1.0;
  Split train_, test_;
  std::vector<EnvironmentSpec> envs_;
  std::vector<float> data_;
};

struct GenerateOptions {
  int threads = 1;
  nlohmann::json config;  // echoed into meta.json
};

/// Generates every environment and trajectory of the profile and writes the
/// dataset directory. Output bytes depend only on (family, profile, seed).
void generate_dataset(Family family, const DatasetProfile& profile, std::uint64_t global_seed,
                      const std::filesystem::path& out_dir, const GenerateOptions& opt = {});

/// Writes trajectories (already in physical units) in the dataset binary
/// layout, one environment with `trajs` trajectories.
void write_trajectories(const std::filesystem::path& path, const std::vector<float>& values);

}  // namespace zebra::pde
