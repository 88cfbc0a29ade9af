// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/vq/model.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

#include "zebra/num/ops.hpp"

namespace zebra::vq {

using num::Tensor;

int VqConfig::levels() const { return std::countr_zero(static_cast<unsigned>(compression)); }

std::int64_t VqConfig::positions() const {
  std::int64_t p = 1;
  for (auto g : grid) p *= g / compression;
  return p;
}

std::int64_t VqConfig::frame_size() const {
  std::int64_t p = 1;
  for (auto g : grid) p *= g;
  return p;
}

int VqConfig::hidden(int level) const {
  std::int64_t h = start_hidden;
  for (int i = 0; i < level && h < max_hidden; ++i) h *= 2;
  return static_cast<int>(std::min<std::int64_t>(h, max_hidden));
}

void VqConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("vq config: " + msg); };
  if (grid.empty() || grid.size() > 2) fail("grid must have 1 or 2 axes");
  if (compression < 1 || !std::has_single_bit(static_cast<unsigned>(compression)))
    fail("compression must be a power of two, got " + std::to_string(compression));
  for (auto g : grid)
    if (g <= 0 || g % compression != 0)
      fail("grid extent " + std::to_string(g) + " is not divisible by compression " + std::to_string(compression));
  if (start_hidden <= 0 || max_hidden < start_hidden) fail("need 0 < start_hidden <= max_hidden");
  if (num_codebooks <= 0) fail("num_codebooks must be positive");
  if (code_dim <= 0) fail("code_dim must be positive");
  if (codebook_size <= 1) fail("codebook_size must exceed 1");
  if (!shared_codebook) fail("only shared_codebook = true is supported");
  if (commitment < 0) fail("commitment must be non-negative");
  if (decay < 0 || decay > 1) fail("decay must lie in [0, 1]");
  if (eps <= 0) fail("eps must be positive");
}

nlohmann::json VqConfig::to_json() const {
  return {{"grid", grid},
          {"compression", compression},
          {"start_hidden", start_hidden},
          {"max_hidden", max_hidden},
          {"num_codebooks", num_codebooks},
          {"code_dim", code_dim},
          {"codebook_size", codebook_size},
          {"shared_codebook", shared_codebook},
          {"commitment", commitment},
          {"decay", decay},
          {"eps", eps},
          {"dead_code_steps", dead_code_steps},
          {"seed", seed},
          {"tokens_per_frame", tokens_per_frame()}};
}

VqConfig VqConfig::from_json(const nlohmann::json& j) {
  VqConfig c;
  c.grid = j.at("grid").get<std::vector<std::int64_t>>();
  c.compression = j.at("compression").get<int>();
  c.start_hidden = j.at("start_hidden").get<int>();
  c.max_hidden = j.at("max_hidden").get<int>();
  c.num_codebooks = j.at("num_codebooks").get<int>();
  c.code_dim = j.at("code_dim").get<int>();
  c.codebook_size = j.at("codebook_size").get<int>();
  c.shared_codebook = j.value("shared_codebook", true);
  c.commitment = j.value("commitment", 0.25);
  c.decay = j.value("decay", 0.99);
  c.eps = j.value("eps", 1e-5);
  c.dead_code_steps = j.value("dead_code_steps", std::int64_t{2000});
  c.seed = j.value("seed", std::uint64_t{0});
  c.validate();
  if (j.contains("tokens_per_frame") && j["tokens_per_frame"].get<std::int64_t>() != c.tokens_per_frame()) {
    throw std::invalid_argument("vq config: tokens_per_frame " + j["tokens_per_frame"].dump() +
                                " disagrees with grid/compression/num_codebooks (" +
                                std::to_string(c.tokens_per_frame()) + ")");
  }
  return c;
}

VqConfig vq_preset(pde::Family family, std::string_view profile) {
  VqConfig c;
  c.grid = pde::make_profile(family, profile).grid;
  switch (family) {
    case pde::Family::vorticity2d:
      c.compression = 4;
      c.num_codebooks = 1;
      break;
    case pde::Family::wave2d:
      c.compression = 8;
      c.num_codebooks = 2;
      break;
    default:
      c.compression = 16;
      c.num_codebooks = 2;
  }
  const bool two_d = c.grid.size() == 2;
  c.start_hidden = two_d ? 128 : 64;
  c.max_hidden = two_d ? 1024 : 256;
  c.code_dim = two_d ? 16 : 64;
  c.codebook_size = two_d ? 2048 : 256;
  if (profile == "desk") {
    c.start_hidden = 16;
    c.max_hidden = 64;
    c.dead_code_steps = 100;
  } else if (profile == "tiny") {
    c.start_hidden = 8;
    c.max_hidden = 16;
    c.codebook_size = 32;
    c.code_dim = 8;
    c.dead_code_steps = 50;
  }
  c.validate();
  return c;
}

VqModel::Conv VqModel::make_conv(int in, int out, int kernel) {
  num::Shape shape = {out, in, kernel};
  std::int64_t fan_in = static_cast<std::int64_t>(in) * kernel;
  if (config_.dims() == 2) {
    shape.push_back(kernel);
    fan_in *= kernel;
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Conv c{Tensor(shape, true), Tensor({out}, true)};
  for (auto& v : c.weight.data()) v = static_cast<float>(init_rng_.uniform(-bound, bound));
  for (auto& v : c.bias.data()) v = static_cast<float>(init_rng_.uniform(-bound, bound));
  return c;
}

VqModel::ResBlock VqModel::make_block(int in, int out) {
  ResBlock b;
  b.c1 = make_conv(in, out, 3);
  b.c2 = make_conv(out, out, 3);
  if (in != out) b.skip = make_conv(in, out, 1);
  return b;
}

VqModel::VqModel(VqConfig config)
    : config_(std::move(config)),
      codebook_((config_.validate(), config_.codebook_size), config_.code_dim, config_.decay, config_.eps,
                config_.dead_code_steps),
      init_rng_(num::hash_seed({config_.seed, num::hash_string("vq-init")})) {
  const int L = config_.levels();
  enc_in_ = make_conv(1, config_.hidden(0), 3);
  for (int i = 0; i < L; ++i) {
    enc_blocks_.push_back(make_block(config_.hidden(i), config_.hidden(i + 1)));
    enc_down_.push_back(make_conv(config_.hidden(i + 1), config_.hidden(i + 1), 3));
  }
  enc_mid_ = make_block(config_.hidden(L), config_.hidden(L));
  enc_head_ = make_conv(config_.hidden(L), config_.num_codebooks * config_.code_dim, 1);

  dec_in_ = make_conv(config_.num_codebooks * config_.code_dim, config_.hidden(L), 1);
  dec_mid_ = make_block(config_.hidden(L), config_.hidden(L));
  for (int i = L - 1; i >= 0; --i) {
    dec_up_.push_back(make_conv(config_.hidden(i + 1), config_.hidden(i + 1), 3));
    dec_blocks_.push_back(make_block(config_.hidden(i + 1), config_.hidden(i)));
  }
  dec_out_ = make_conv(config_.hidden(0), 1, 3);
}

num::NamedTensors VqModel::named_parameters() const {
  num::NamedTensors out;
  auto conv = [&](const std::string& name, const Conv& c) {
    out.emplace_back(name + ".weight", c.weight);
    out.emplace_back(name + ".bias", c.bias);
  };
  auto block = [&](const std::string& name, const ResBlock& b) {
    conv(name + ".conv1", b.c1);
    conv(name + ".conv2", b.c2);
    if (b.skip.weight.defined()) conv(name + ".skip", b.skip);
  };
  conv("enc.in", enc_in_);
  for (std::size_t i = 0; i < enc_blocks_.size(); ++i) {
    block("enc.block" + std::to_string(i), enc_blocks_[i]);
    conv("enc.down" + std::to_string(i), enc_down_[i]);
  }
  block("enc.mid", enc_mid_);
  conv("enc.head", enc_head_);
  conv("dec.in", dec_in_);
  block("dec.mid", dec_mid_);
  for (std::size_t i = 0; i < dec_blocks_.size(); ++i) {
    conv("dec.up" + std::to_string(i), dec_up_[i]);
    block("dec.block" + std::to_string(i), dec_blocks_[i]);
  }
  conv("dec.out", dec_out_);
  return out;
}

std::vector<Tensor> VqModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

Tensor VqModel::apply(const Conv& c, const Tensor& x, int stride, int pad) const {
  Tensor y = config_.dims() == 1 ? num::conv1d(x, c.weight, stride, pad) : num::conv2d(x, c.weight, stride, pad);
  return num::channel_bias(y, c.bias);
}

Tensor VqModel::apply(const ResBlock& b, const Tensor& x) const {
  Tensor h = apply(b.c1, num::silu(x), 1, 1);
  h = apply(b.c2, num::silu(h), 1, 1);
  Tensor skip = b.skip.weight.defined() ? apply(b.skip, x, 1, 0) : x;
  return num::add(skip, h);
}

Tensor VqModel::encode(const Tensor& frames) const {
  num::Shape expect = {frames.rank() > 0 ? frames.dim(0) : 0, 1};
  expect.insert(expect.end(), config_.grid.begin(), config_.grid.end());
  if (frames.shape() != expect) {
    throw num::ShapeError("encode: frame grid does not match the tokenizer grid");
  }
  const std::int64_t batch = frames.dim(0);
  Tensor h = apply(enc_in_, frames, 1, 1);
  for (std::size_t i = 0; i < enc_blocks_.size(); ++i) {
    h = apply(enc_blocks_[i], h);
    h = apply(enc_down_[i], h, 2, 1);
  }
  h = apply(enc_mid_, h);
  h = apply(enc_head_, num::silu(h), 1, 0);
  const std::int64_t channels = config_.num_codebooks * config_.code_dim;
  h = num::reshape(h, {batch, channels, config_.positions()});
  h = num::transpose(h);
  return num::reshape(h, {batch * config_.positions() * config_.num_codebooks, config_.code_dim});
}

Tensor VqModel::decode(const Tensor& rows, std::int64_t batch) const {
  const std::int64_t channels = config_.num_codebooks * config_.code_dim;
  const std::int64_t P = config_.positions();
  if (rows.rank() != 2 || rows.dim(0) != batch * P * config_.num_codebooks || rows.dim(1) != config_.code_dim) {
    throw num::ShapeError("decode: latent rows do not match the tokenizer layout");
  }
  Tensor h = num::transpose(num::reshape(rows, {batch, P, channels}));
  num::Shape latent = {batch, channels};
  for (auto g : config_.grid) latent.push_back(g / config_.compression);
  h = num::reshape(h, latent);
  h = apply(dec_in_, h, 1, 0);
  h = apply(dec_mid_, h);
  for (std::size_t i = 0; i < dec_blocks_.size(); ++i) {
    h = apply(dec_up_[i], num::upsample2x(h), 1, 1);
    h = apply(dec_blocks_[i], h);
  }
  return apply(dec_out_, num::silu(h), 1, 1);
}

void VqModel::quantize(LatentGrid& g) const {
  const std::int64_t n = g.rows();
  if (static_cast<std::int64_t>(g.z.size()) != n * codebook_.dim()) {
    throw num::ShapeError("quantize: latent dimension does not match the codebook");
  }
  g.indices.resize(static_cast<std::size_t>(n));
  codebook_.quantize(g.z.data(), n, g.indices.data());
  g.zq.resize(g.z.size());
  codebook_.gather(g.indices, g.zq.data());
}

void VqModel::save(const std::filesystem::path& dir, const nlohmann::json& extra) const {
  auto tensors = named_parameters();
  const auto K = static_cast<std::int64_t>(codebook_.size());
  const auto d = static_cast<std::int64_t>(codebook_.dim());
  auto entries = codebook_.entries();
  tensors.emplace_back("codebook.entries", Tensor({K, d}, {entries.begin(), entries.end()}));
  std::vector<float> cs(codebook_.cluster_size().begin(), codebook_.cluster_size().end());
  std::vector<float> es(codebook_.embed_sum().begin(), codebook_.embed_sum().end());
  tensors.emplace_back("codebook.cluster_size", Tensor({K}, cs));
  tensors.emplace_back("codebook.embed_sum", Tensor({K, d}, es));
  nlohmann::json meta = extra.is_null() ? nlohmann::json::object() : extra;
  meta["kind"] = "vqvae";
  meta["config"] = config_.to_json();
  num::save_checkpoint(dir, tensors, meta);
}

VqModel VqModel::load(const std::filesystem::path& dir, nlohmann::json* meta) {
  const auto ckpt = num::load_checkpoint(dir);
  if (ckpt.meta.value("kind", "") != "vqvae") {
    throw num::IoError(dir.string() + ": not a VQ-VAE checkpoint");
  }
  VqModel model(VqConfig::from_json(ckpt.meta.at("config")));
  num::assign_tensors(ckpt, model.named_parameters());
  model.codebook_.set_state(ckpt.at("codebook.entries").data(), ckpt.at("codebook.cluster_size").data(),
                            ckpt.at("codebook.embed_sum").data());
  if (meta) *meta = ckpt.meta;
  return model;
}

VqLossTerms vq_loss(const Tensor& u, const Tensor& uhat, const Tensor& z, const Tensor& zq, double alpha) {
  if (u.shape() != uhat.shape()) throw num::ShapeError("vq_loss: reconstruction shape mismatch");
  if (z.shape() != zq.shape()) throw num::ShapeError("vq_loss: latent shape mismatch");
  VqLossTerms out;
  const std::int64_t batch = u.dim(0);
  const std::int64_t inner = batch == 0 ? 0 : u.numel() / batch;
  std::vector<float> inv(static_cast<std::size_t>(batch));
  for (std::int64_t b = 0; b < batch; ++b) {
    double acc = 0;
    for (std::int64_t i = 0; i < inner; ++i) acc += static_cast<double>(u.data()[b * inner + i]) * u.data()[b * inner + i];
    if (acc > 0) {
      inv[b] = static_cast<float>(1.0 / std::sqrt(acc));
    } else {
      inv[b] = 1.0f;
      ++out.zero_norm_frames;
    }
  }
  Tensor recon = num::mean(num::mul(num::row_norm(num::sub(uhat, u)), Tensor({batch}, inv)));
  Tensor e = num::sub(z, num::stop_gradient(zq));
  Tensor commit = num::mean(num::mul(e, e));
  out.total = num::add(recon, num::scale(commit, static_cast<float>(alpha)));
  out.recon = recon.item();
  out.commit = commit.item();
  return out;
}

}  // namespace zebra::vq
