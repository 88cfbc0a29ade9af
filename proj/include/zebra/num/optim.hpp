// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "zebra/num/tensor.hpp"

namespace zebra::num {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Adam with decoupled weight decay. Parameters without a gradient in a step
/// are left untouched.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  /// Returns false (and changes nothing) when any gradient is non-finite.
  bool step(double lr_now);
  void zero_grad();

  std::int64_t steps() const { return step_; }
  std::int64_t skipped() const { return skipped_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  std::int64_t step_ = 0;
  std::int64_t skipped_ = 0;
};

/// Linear warmup to base_lr, then half-cosine decay to zero at total_steps.
double cosine_lr(std::int64_t step, std::int64_t total_steps, double base_lr,
                 std::int64_t warmup_steps);

/// 1% of total steps, at least 100, but never more than a tenth of the run.
std::int64_t default_warmup(std::int64_t total_steps);

/// Scales gradients in place so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(const std::vector<Tensor>& params, double max_norm);

}  // namespace zebra::num
