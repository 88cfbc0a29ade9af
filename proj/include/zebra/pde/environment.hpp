// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <vector>

namespace zebra::pde {

enum class Family { advection, heat, burgers, wave_b, combined, wave2d, vorticity2d };

std::string family_name(Family f);
/// Throws std::invalid_argument for unknown names.
Family parse_family(std::string_view name);
int spatial_dims(Family f);
const std::vector<Family>& all_families();

enum class Boundary { periodic, dirichlet, neumann };
std::string boundary_name(Boundary b);

/// One forcing mode A sin(omega t + 2 pi ell x / L + phase).
struct ForcingMode {
  double amplitude = 0;
  double omega = 0;
  int ell = 1;
  double phase = 0;
};

struct EnvironmentSpec {
  Family family = Family::advection;
  std::int64_t env_index = 0;
  std::uint64_t env_seed = 0;
  std::map<std::string, double> params;
  Boundary left = Boundary::periodic;
  Boundary right = Boundary::periodic;
  std::vector<ForcingMode> forcing;

  double param(const std::string& name) const;
  nlohmann::json to_json() const;
  static EnvironmentSpec from_json(const nlohmann::json& j);
};

/// Grid, horizon and split sizes for one family at one scale.
struct DatasetProfile {
  std::string name;
  std::int64_t n_train_envs = 0;
  std::int64_t n_test_envs = 0;
  std::int64_t traj_per_env = 0;
  /// When > 0, all environments appear in both splits and trajectories
  /// [test_traj_start, traj_per_env) form the test split (wave_b).
  std::int64_t test_traj_start = 0;
  /// Trajectories per test environment when it differs from traj_per_env
  /// (0 = same). Slots a split does not use are stored as zeros.
  std::int64_t test_traj_per_env = 0;
  std::int64_t frames = 0;
  std::vector<std::int64_t> grid;
  double t_final = 0;
  double length = 0;

  std::int64_t n_envs() const;
  std::int64_t stored_traj_per_env() const;
  std::int64_t frame_size() const;
  nlohmann::json to_json() const;
  static DatasetProfile from_json(const nlohmann::json& j);
};

/// Known profile names: "desk", "paper", "tiny" (tests).
DatasetProfile make_profile(Family f, std::string_view name);

/// Parameters are drawn from an RNG keyed by (global_seed, family, env_index).
EnvironmentSpec sample_environment(Family f, std::int64_t env_index, std::uint64_t global_seed);

/// Family-appropriate initial condition on the profile grid.
std::vector<double> sample_initial_condition(const EnvironmentSpec& env, std::uint64_t ic_seed,
                                             const DatasetProfile& profile);

}  // namespace zebra::pde
