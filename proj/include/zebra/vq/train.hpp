// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <vector>

#include "zebra/pde/dataset.hpp"
#include "zebra/vq/model.hpp"

namespace zebra::vq {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct VqTrainConfig {
  int epochs = 200;
  int batch_size = 32;
  double lr = 3e-4;
  double weight_decay = 1e-4;
  std::int64_t warmup_steps = -1;  // -1: default_warmup(total)
  std::uint64_t seed = 0;
  std::int64_t max_val_frames = 512;
  /// Stop once held-out recon rel L2 <= target and usage >= usage_target
  /// (0 disables early stopping).
  double target_recon = 0.0;
  double target_usage = 0.0;
  nlohmann::json echo;  // stored in the checkpoint metadata
};

struct VqEpochStats {
  int epoch = 0;
  double train_loss = 0;
  double train_recon = 0;
  double val_recon = 0;
  double usage = 0;
  double seconds = 0;
};

struct VqTrainResult {
  std::vector<VqEpochStats> epochs;
  double val_recon = 0;
  double usage = 0;
  double seconds = 0;
};

/// Trains on uniformly shuffled frames of the train split and writes
/// `out_dir/checkpoint` after every epoch plus `out_dir/train_log.jsonl`.
VqTrainResult train_vqvae(const pde::Dataset& data, const VqConfig& config, const VqTrainConfig& train,
                          const std::filesystem::path& out_dir);

/// Trains on an explicit frame set (already normalized), no I/O. Used for
/// overfit checks; returns per-step recon values.
std::vector<double> overfit_vqvae(VqModel& model, const std::vector<float>& frames, int steps, double lr,
                                  std::uint64_t seed);

/// Mean per-frame rel L2 of decode(quantize(encode(u))) over the listed
/// (env, traj, t) frames, evaluated in batches.
double reconstruction_error(const VqModel& model, const pde::Dataset& data,
                            const std::vector<std::array<std::int64_t, 3>>& frames);

}  // namespace zebra::vq
