// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/num/optim.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace zebra::num {

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0f);
    v_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0f);
  }
}

bool Adam::step(double lr_now) {
  for (const auto& p : params_) {
    if (!p.has_grad()) continue;
    for (float g : p.grad()) {
      if (!std::isfinite(g)) {
        ++skipped_;
        spdlog::warn("adam: non-finite gradient, skipping step {}", step_ + 1);
        return false;
      }
    }
  }
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const double decay = 1.0 - lr_now * config_.weight_decay;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    auto w = p.data();
    auto g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j];
      const double mj = b1 * m[j] + (1.0 - b1) * gj;
      const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double update = (mj / c1) / (std::sqrt(vj / c2) + config_.eps);
      w[j] = static_cast<float>(w[j] * decay - lr_now * update);
    }
  }
  return true;
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double cosine_lr(std::int64_t step, std::int64_t total_steps, double base_lr,
                 std::int64_t warmup_steps) {
  if (total_steps <= 0) throw std::invalid_argument("cosine_lr: total_steps must be positive");
  if (step < 0 || step > total_steps) {
    throw std::invalid_argument("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                                std::to_string(total_steps) + "]");
  }
  warmup_steps = std::clamp<std::int64_t>(warmup_steps, 0, total_steps);
  if (step < warmup_steps) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  const std::int64_t span = total_steps - warmup_steps;
  if (span == 0) return base_lr;
  const double t = static_cast<double>(step - warmup_steps) / static_cast<double>(span);
  return std::max(0.0, base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t)));
}

std::int64_t default_warmup(std::int64_t total_steps) {
  const std::int64_t w = std::max<std::int64_t>(100, total_steps / 100);
  return std::min(w, total_steps / 10);
}

double clip_grad_norm(const std::vector<Tensor>& params, double max_norm) {
  double total = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (float g : p.grad()) total += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(total);
  if (norm > max_norm && std::isfinite(norm)) {
    const float s = static_cast<float>(max_norm / (norm + 1e-12));
    for (auto p : params) {
      if (!p.has_grad()) continue;
      for (float& g : p.mutable_grad()) g *= s;
    }
  }
  return norm;
}

}  // namespace zebra::num
