// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <vector>

#include "zebra/lm/model.hpp"
#include "zebra/num/rng.hpp"
#include "zebra/seq/sequence.hpp"

namespace zebra::lm {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LmTrainConfig {
  int epochs = 100;
  int batch_size = 4;
  int grad_accum = 1;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double clip = 1.0;
  std::int64_t warmup_steps = -1;  // -1: default_warmup(total)
  std::uint64_t seed = 0;
  /// Sequences drawn per epoch; 0 means one per training trajectory.
  std::int64_t sequences_per_epoch = 0;
  std::int64_t log_every = 10;
  /// Draw each epoch's sequences from symmetry-transformed, re-tokenized
  /// training trajectories. Applied by the caller that owns the physical
  /// data (see EpochSampler).
  bool augment = false;
  nlohmann::json echo;  // stored in the checkpoint metadata
};

struct LmEpochStats {
  int epoch = 0;
  std::int64_t step = 0;
  double train_loss = 0;
  double val_loss = 0;
  double lr = 0;
  double seconds = 0;
};

struct LmTrainResult {
  std::vector<LmEpochStats> epochs;
  double initial_val_loss = 0;  // before the first step
  double val_loss = 0;
  double seconds = 0;
};

/// Draws `count` sequences and packs <bos>S<eos> units into windows.
std::vector<seq::PackedWindow> sample_windows(const seq::ContextSampler& sampler, std::int64_t count,
                                              std::int64_t window, const seq::Vocabulary& vocab, num::Rng& rng);

/// Token-weighted mean loss over `windows`, evaluated `batch` at a time.
double evaluate_loss(const LmModel& model, const std::vector<seq::PackedWindow>& windows, int batch = 4);

/// Resamples and packs fresh training windows each epoch, steps Adam on a
/// cosine schedule with global-norm clipping, evaluates `val` after every
/// epoch and writes `out_dir/checkpoint` and `out_dir/train_log.jsonl`.
/// Throws TrainingError on a non-finite loss or gradient.
LmTrainResult train_lm(LmModel& model, const seq::ContextSampler& train, const std::vector<seq::PackedWindow>& val,
                       const LmTrainConfig& config, const std::filesystem::path& out_dir);

/// Sampler for a 1-based epoch. The returned reference must stay valid
/// until the next call.
using EpochSampler = std::function<const seq::ContextSampler&(int epoch)>;

LmTrainResult train_lm(LmModel& model, const EpochSampler& train, const std::vector<seq::PackedWindow>& val,
                       const LmTrainConfig& config, const std::filesystem::path& out_dir);

/// Repeated steps on one window at a constant rate; stops early once the
/// loss drops below `target`. Returns the loss of every step.
std::vector<double> overfit_lm(LmModel& model, const seq::PackedWindow& window, int steps, double lr,
                               double target = 0.0);

}  // namespace zebra::lm
