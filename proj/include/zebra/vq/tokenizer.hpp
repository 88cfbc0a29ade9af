// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "zebra/vq/model.hpp"

namespace zebra::vq {

/// Trained VQ-VAE plus the dataset scale, mapping physical frames to token
/// ids and back. Frames are processed one at a time, so results do not
/// depend on how many frames are passed together. Const methods are safe to
/// call concurrently.
class Tokenizer {
 public:
  Tokenizer(VqModel model, double norm_scale, nlohmann::json meta = {});
  static Tokenizer load(const std::filesystem::path& checkpoint_dir);

  const VqModel& model() const { return model_; }
  const nlohmann::json& meta() const { return meta_; }
  double norm_scale() const { return norm_scale_; }
  std::int64_t tokens_per_frame() const { return model_.config().tokens_per_frame(); }
  std::int64_t frame_size() const { return model_.config().frame_size(); }
  int codebook_size() const { return model_.config().codebook_size; }

  /// Continuous latents of n physical frames laid end to end.
  LatentGrid encode(std::span<const float> frames) const;
  void quantize(LatentGrid& grid) const { model_.quantize(grid); }
  /// Physical frames from the quantized latents of `grid`.
  std::vector<float> decode(const LatentGrid& grid) const;

  std::vector<std::int32_t> tokenize(std::span<const float> frames) const;
  /// Throws std::out_of_range for ids outside [0, K) and
  /// std::invalid_argument when the count is not a whole number of frames.
  std::vector<float> detokenize(std::span<const std::int32_t> ids) const;

 private:
  VqModel model_;
  double norm_scale_;
  nlohmann::json meta_;
};

}  // namespace zebra::vq
