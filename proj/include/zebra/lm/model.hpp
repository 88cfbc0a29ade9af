// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <span>
#include <string_view>
#include <vector>

#include "zebra/num/checkpoint.hpp"
#include "zebra/num/tensor.hpp"
#include "zebra/pde/environment.hpp"
#include "zebra/seq/sequence.hpp"

namespace zebra::lm {

struct LmConfig {
  std::int32_t vocab = 264;
  std::int32_t content_vocab = 256;  // K; ids >= K are special
  int hidden = 256;
  int depth = 8;
  int heads = 8;
  double mlp_ratio = 4.0;
  std::int64_t max_context = 2048;
  double rope_base = 10000.0;
  std::uint64_t seed = 0;
  bool loss_on_specials = true;
  bool segment_mask = true;

  int head_dim() const { return hidden / heads; }
  int mlp_hidden() const { return static_cast<int>(mlp_ratio * hidden + 0.5); }
  void validate() const;
  nlohmann::json to_json() const;
  static LmConfig from_json(const nlohmann::json& j);
};

/// "paper" follows the published sizes; "desk" and "tiny" shrink them.
LmConfig lm_preset(pde::Family family, std::string_view profile, std::int32_t codebook_size);

/// V*C + depth*(2C + 4C^2 + 3CF) + C + C*V
std::int64_t parameter_count(const LmConfig& c);

/// Decoder-only transformer: embedding, depth x (RMS-norm, rotary causal
/// attention, residual, RMS-norm, SiLU-gated MLP, residual), final RMS-norm,
/// untied output projection.
class LmModel {
 public:
  explicit LmModel(LmConfig config);

  const LmConfig& config() const { return config_; }
  num::NamedTensors named_parameters() const;
  std::vector<num::Tensor> parameters() const;

  /// ids [batch, len] row-major -> logits [batch * len, V]. `segments`
  /// ([batch, len], optional) restricts attention to equal segment ids.
  num::Tensor forward(std::span<const std::int32_t> ids, std::int64_t batch, std::int64_t len,
                      std::span<const std::int32_t> segments = {}) const;

  void save(const std::filesystem::path& dir, const nlohmann::json& extra) const;
  static LmModel load(const std::filesystem::path& dir, nlohmann::json* meta = nullptr);

 private:
  friend class Session;
  struct Layer {
    num::Tensor attn_norm, wq, wk, wv, wo, mlp_norm, w_gate, w_up, w_down;
  };
  LmConfig config_;
  num::Tensor embed_;
  std::vector<Layer> layers_;
  num::Tensor final_norm_;
  num::Tensor head_;
};

struct LossResult {
  num::Tensor loss;  // undefined when skipped
  std::int64_t counted = 0;
  bool skipped = true;
};

/// Next-token cross entropy over a batch of packed windows. Inputs are ids
/// [0, L-1), targets ids [1, L) where L is the longest unpadded length in
/// the batch; pad targets (and specials, when excluded) are masked.
LossResult lm_loss(const LmModel& model, const std::vector<const seq::PackedWindow*>& windows);

}  // namespace zebra::lm
