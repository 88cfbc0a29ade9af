// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/lm/model.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "zebra/num/ops.hpp"
#include "zebra/num/rng.hpp"

namespace zebra::lm {

using num::Tensor;

void LmConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("lm config: " + msg); };
  if (hidden <= 0 || heads <= 0 || hidden % heads != 0) fail("hidden must be a positive multiple of heads");
  if (head_dim() % 2 != 0) fail("head dimension must be even for rotary embeddings");
  if (depth <= 0) fail("depth must be positive");
  if (mlp_ratio <= 0) fail("mlp_ratio must be positive");
  if (content_vocab <= 0 || vocab != content_vocab + seq::Vocabulary::kSpecials) fail("vocab must equal K + 8");
  if (max_context < 2) fail("max_context must be at least 2");
  if (rope_base <= 1) fail("rope_base must exceed 1");
}

nlohmann::json LmConfig::to_json() const {
  return {{"vocab", vocab},         {"content_vocab", content_vocab},
          {"hidden", hidden},       {"depth", depth},
          {"heads", heads},         {"mlp_ratio", mlp_ratio},
          {"max_context", max_context}, {"rope_base", rope_base},
          {"seed", seed},           {"loss_on_specials", loss_on_specials},
          {"segment_mask", segment_mask}};
}

LmConfig LmConfig::from_json(const nlohmann::json& j) {
  LmConfig c;
  c.vocab = j.at("vocab").get<std::int32_t>();
  c.content_vocab = j.at("content_vocab").get<std::int32_t>();
  c.hidden = j.at("hidden").get<int>();
  c.depth = j.at("depth").get<int>();
  c.heads = j.at("heads").get<int>();
  c.mlp_ratio = j.at("mlp_ratio").get<double>();
  c.max_context = j.at("max_context").get<std::int64_t>();
  c.rope_base = j.value("rope_base", 10000.0);
  c.seed = j.value("seed", std::uint64_t{0});
  c.loss_on_specials = j.value("loss_on_specials", true);
  c.segment_mask = j.value("segment_mask", true);
  c.validate();
  return c;
}

LmConfig lm_preset(pde::Family family, std::string_view profile, std::int32_t codebook_size) {
  LmConfig c;
  c.content_vocab = codebook_size;
  c.vocab = codebook_size + seq::Vocabulary::kSpecials;
  const bool two_d = pde::spatial_dims(family) == 2;
  c.max_context = two_d ? 8192 : 2048;
  c.hidden = family == pde::Family::vorticity2d ? 384 : family == pde::Family::wave2d ? 512 : 256;
  if (profile == "desk") {
    c.hidden = 128;
    c.depth = 4;
    c.heads = 4;
  } else if (profile == "tiny") {
    c.hidden = 32;
    c.depth = 2;
    c.heads = 2;
  } else if (profile != "paper") {
    throw std::invalid_argument("unknown profile '" + std::string(profile) + "'");
  }
  c.validate();
  return c;
}

std::int64_t parameter_count(const LmConfig& c) {
  const std::int64_t C = c.hidden, V = c.vocab, F = c.mlp_hidden();
  return V * C + c.depth * (2 * C + 4 * C * C + 3 * C * F) + C + C * V;
}

LmModel::LmModel(LmConfig config) : config_(std::move(config)) {
  config_.validate();
  num::Rng rng(num::hash_seed({config_.seed, num::hash_string("lm-init")}));
  auto normal = [&](num::Shape shape) {
    Tensor t(std::move(shape), true);
    for (auto& v : t.data()) v = static_cast<float>(0.02 * rng.normal());
    return t;
  };
  auto ones = [](std::int64_t n) { return Tensor::full({n}, 1.0f, true); };
  const std::int64_t C = config_.hidden, F = config_.mlp_hidden(), V = config_.vocab;
  embed_ = normal({V, C});
  for (int l = 0; l < config_.depth; ++l) {
    Layer L;
    L.attn_norm = ones(C);
    L.wq = normal({C, C});
    L.wk = normal({C, C});
    L.wv = normal({C, C});
    L.wo = normal({C, C});
    L.mlp_norm = ones(C);
    L.w_gate = normal({C, F});
    L.w_up = normal({C, F});
    L.w_down = normal({F, C});
    layers_.push_back(std::move(L));
  }
  final_norm_ = ones(C);
  head_ = normal({C, V});
}

num::NamedTensors LmModel::named_parameters() const {
  num::NamedTensors out = {{"embed", embed_}};
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    const auto& L = layers_[l];
    out.emplace_back(p + "attn_norm", L.attn_norm);
    out.emplace_back(p + "wq", L.wq);
    out.emplace_back(p + "wk", L.wk);
    out.emplace_back(p + "wv", L.wv);
    out.emplace_back(p + "wo", L.wo);
    out.emplace_back(p + "mlp_norm", L.mlp_norm);
    out.emplace_back(p + "w_gate", L.w_gate);
    out.emplace_back(p + "w_up", L.w_up);
    out.emplace_back(p + "w_down", L.w_down);
  }
  out.emplace_back("final_norm", final_norm_);
  out.emplace_back("head", head_);
  return out;
}

std::vector<Tensor> LmModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

Tensor LmModel::forward(std::span<const std::int32_t> ids, std::int64_t batch, std::int64_t len,
                        std::span<const std::int32_t> segments) const {
  if (static_cast<std::int64_t>(ids.size()) != batch * len) throw num::ShapeError("forward: ids are not [batch, len]");
  if (len > config_.max_context) {
    throw std::length_error("sequence of " + std::to_string(len) + " tokens exceeds max_context " +
                            std::to_string(config_.max_context));
  }
  const std::int64_t C = config_.hidden, H = config_.heads, D = config_.head_dim();
  Tensor x = num::embedding(embed_, ids, {batch, len});
  for (const auto& L : layers_) {
    Tensor h = num::rms_norm(x, L.attn_norm);
    Tensor q = num::rope(num::reshape(num::matmul(h, L.wq), {batch, len, H, D}), 0, config_.rope_base);
    Tensor k = num::rope(num::reshape(num::matmul(h, L.wk), {batch, len, H, D}), 0, config_.rope_base);
    Tensor v = num::reshape(num::matmul(h, L.wv), {batch, len, H, D});
    Tensor a = num::reshape(num::causal_attention(q, k, v, 0, segments), {batch, len, C});
    x = num::add(x, num::matmul(a, L.wo));
    h = num::rms_norm(x, L.mlp_norm);
    Tensor g = num::mul(num::silu(num::matmul(h, L.w_gate)), num::matmul(h, L.w_up));
    x = num::add(x, num::matmul(g, L.w_down));
  }
  Tensor logits = num::matmul(num::rms_norm(x, final_norm_), head_);
  return num::reshape(logits, {batch * len, config_.vocab});
}

void LmModel::save(const std::filesystem::path& dir, const nlohmann::json& extra) const {
  nlohmann::json meta = extra.is_null() ? nlohmann::json::object() : extra;
  meta["kind"] = "transformer";
  meta["config"] = config_.to_json();
  meta["parameter_count"] = parameter_count(config_);
  num::save_checkpoint(dir, named_parameters(), meta);
}

LmModel LmModel::load(const std::filesystem::path& dir, nlohmann::json* meta) {
  const auto ckpt = num::load_checkpoint(dir);
  if (ckpt.meta.value("kind", "") != "transformer") throw num::IoError(dir.string() + ": not a transformer checkpoint");
  LmModel model(LmConfig::from_json(ckpt.meta.at("config")));
  num::assign_tensors(ckpt, model.named_parameters());
  if (meta) *meta = ckpt.meta;
  return model;
}

LossResult lm_loss(const LmModel& model, const std::vector<const seq::PackedWindow*>& windows) {
  LossResult out;
  if (windows.empty()) return out;
  const auto& cfg = model.config();
  std::int64_t L = 0;
  for (const auto* w : windows) {
    const auto real = static_cast<std::int64_t>(std::find(w->mask.rbegin(), w->mask.rend(), 1) - w->mask.rbegin());
    L = std::max<std::int64_t>(L, static_cast<std::int64_t>(w->mask.size()) - real);
  }
  if (L < 2) return out;
  const std::int64_t B = static_cast<std::int64_t>(windows.size()), T = L - 1;
  std::vector<std::int32_t> inputs, targets, segments;
  std::vector<std::uint8_t> mask;
  seq::Vocabulary vocab{cfg.content_vocab};
  for (const auto* w : windows) {
    inputs.insert(inputs.end(), w->ids.begin(), w->ids.begin() + T);
    targets.insert(targets.end(), w->ids.begin() + 1, w->ids.begin() + L);
    for (std::int64_t i = 1; i < L; ++i) {
      const bool counted = w->mask[i] != 0 && (cfg.loss_on_specials || vocab.is_content(w->ids[i]));
      mask.push_back(counted ? 1 : 0);
    }
    if (cfg.segment_mask) {
      const auto seg = seq::segment_ids(std::span(w->ids).first(static_cast<std::size_t>(T)), vocab);
      segments.insert(segments.end(), seg.begin(), seg.end());
    }
  }
  out.counted = std::count(mask.begin(), mask.end(), 1);
  if (out.counted == 0) return out;
  const Tensor logits = model.forward(inputs, B, T, segments);
  out.loss = num::cross_entropy(logits, targets, mask);
  out.skipped = false;
  return out;
}

}  // namespace zebra::lm
