// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/vq/tokenizer.hpp"

#include <stdexcept>
#include <string>

namespace zebra::vq {

using num::Tensor;

Tokenizer::Tokenizer(VqModel model, double norm_scale, nlohmann::json meta)
    : model_(std::move(model)), norm_scale_(norm_scale), meta_(std::move(meta)) {
  if (!(norm_scale_ > 0)) throw std::invalid_argument("tokenizer normalization scale must be positive");
}

Tokenizer Tokenizer::load(const std::filesystem::path& checkpoint_dir) {
  nlohmann::json meta;
  auto model = VqModel::load(checkpoint_dir, &meta);
  const double scale = meta.value("norm_scale", 1.0);
  return Tokenizer(std::move(model), scale, std::move(meta));
}

LatentGrid Tokenizer::encode(std::span<const float> frames) const {
  const auto& cfg = model_.config();
  const std::int64_t fs = cfg.frame_size();
  if (static_cast<std::int64_t>(frames.size()) % fs != 0) {
    throw std::invalid_argument("encode: " + std::to_string(frames.size()) +
                                " values is not a whole number of frames of size " + std::to_string(fs));
  }
  LatentGrid g;
  g.frames = static_cast<std::int64_t>(frames.size()) / fs;
  g.positions = cfg.positions();
  g.num_codebooks = cfg.num_codebooks;
  g.dim = cfg.code_dim;
  g.z.reserve(static_cast<std::size_t>(g.rows() * g.dim));
  num::Shape shape = {1, 1};
  shape.insert(shape.end(), cfg.grid.begin(), cfg.grid.end());
  num::NoGradGuard no_grad;
  const float inv = static_cast<float>(1.0 / norm_scale_);
  for (std::int64_t f = 0; f < g.frames; ++f) {
    std::vector<float> x(frames.begin() + f * fs, frames.begin() + (f + 1) * fs);
    for (auto& v : x) v *= inv;
    const Tensor z = model_.encode(Tensor(shape, std::move(x)));
    g.z.insert(g.z.end(), z.data().begin(), z.data().end());
  }
  return g;
}

std::vector<float> Tokenizer::decode(const LatentGrid& g) const {
  const auto& cfg = model_.config();
  const std::int64_t per_frame = cfg.tokens_per_frame() * cfg.code_dim;
  if (static_cast<std::int64_t>(g.zq.size()) != g.frames * per_frame) {
    throw std::invalid_argument("decode: quantized latents missing or mis-sized");
  }
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(g.frames * cfg.frame_size()));
  num::NoGradGuard no_grad;
  const auto scale = static_cast<float>(norm_scale_);
  for (std::int64_t f = 0; f < g.frames; ++f) {
    std::vector<float> rows(g.zq.begin() + f * per_frame, g.zq.begin() + (f + 1) * per_frame);
    const Tensor u = model_.decode(Tensor({cfg.tokens_per_frame(), cfg.code_dim}, std::move(rows)), 1);
    for (float v : u.data()) out.push_back(v * scale);
  }
  return out;
}

std::vector<std::int32_t> Tokenizer::tokenize(std::span<const float> frames) const {
  LatentGrid g = encode(frames);
  model_.quantize(g);
  return std::move(g.indices);
}

std::vector<float> Tokenizer::detokenize(std::span<const std::int32_t> ids) const {
  const auto& cfg = model_.config();
  const std::int64_t tpf = cfg.tokens_per_frame();
  if (static_cast<std::int64_t>(ids.size()) % tpf != 0) {
    throw std::invalid_argument("detokenize: " + std::to_string(ids.size()) +
                                " ids is not a multiple of tokens_per_frame " + std::to_string(tpf));
  }
  LatentGrid g;
  g.frames = static_cast<std::int64_t>(ids.size()) / tpf;
  g.positions = cfg.positions();
  g.num_codebooks = cfg.num_codebooks;
  g.dim = cfg.code_dim;
  g.indices.assign(ids.begin(), ids.end());
  g.zq.resize(ids.size() * static_cast<std::size_t>(cfg.code_dim));
  model_.codebook().gather(ids, g.zq.data());
  return decode(g);
}

}  // namespace zebra::vq
