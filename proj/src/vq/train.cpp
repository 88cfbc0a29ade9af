// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/vq/train.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <fstream>

#include "zebra/num/ops.hpp"
#include "zebra/num/optim.hpp"
#include "zebra/num/rng.hpp"

namespace zebra::vq {

namespace fs = std::filesystem;
using num::Tensor;
using FrameRef = std::array<std::int64_t, 3>;

namespace {

num::Shape batch_shape(const VqConfig& cfg, std::int64_t batch) {
  num::Shape s = {batch, 1};
  s.insert(s.end(), cfg.grid.begin(), cfg.grid.end());
  return s;
}

Tensor load_batch(const pde::Dataset& data, const VqConfig& cfg, const std::vector<FrameRef>& refs,
                  std::size_t begin, std::size_t end) {
  const std::int64_t fs = cfg.frame_size();
  const auto inv = static_cast<float>(1.0 / data.norm_scale());
  std::vector<float> x(static_cast<std::size_t>((end - begin) * fs));
  for (std::size_t i = begin; i < end; ++i) {
    const float* f = data.frame(refs[i][0], refs[i][1], refs[i][2]);
    for (std::int64_t k = 0; k < fs; ++k) x[(i - begin) * fs + k] = f[k] * inv;
  }
  return Tensor(batch_shape(cfg, static_cast<std::int64_t>(end - begin)), std::move(x));
}

struct StepOutput {
  double loss;
  double recon;
};

// One optimization step on a normalized batch; the codebook follows by EMA.
StepOutput train_step(VqModel& model, num::Adam& adam, const Tensor& x, double lr, num::Rng& rng) {
  const auto& cfg = model.config();
  const Tensor z = model.encode(x);
  std::vector<std::int32_t> ids(static_cast<std::size_t>(z.dim(0)));
  model.codebook().quantize(z.data().data(), z.dim(0), ids.data());
  std::vector<float> zq_values(static_cast<std::size_t>(z.numel()));
  model.codebook().gather(ids, zq_values.data());
  const Tensor zq(z.shape(), std::move(zq_values));
  const Tensor uhat = model.decode(num::straight_through(z, zq), x.dim(0));
  auto terms = vq_loss(x, uhat, z, zq, cfg.commitment);
  const double loss = terms.total.item();
  if (!std::isfinite(loss)) return {loss, terms.recon};
  num::backward(terms.total);
  adam.step(lr);
  adam.zero_grad();
  model.codebook().ema_update(z.data().data(), ids.data(), z.dim(0), rng);
  return {loss, terms.recon};
}

void init_codebook(VqModel& model, const Tensor& x, num::Rng& rng) {
  num::NoGradGuard no_grad;
  const Tensor z = model.encode(x);
  model.codebook().init_from(z.data().data(), z.dim(0), rng);
}

}  // namespace

double reconstruction_error(const VqModel& model, const pde::Dataset& data, const std::vector<FrameRef>& frames) {
  if (frames.empty()) return 0.0;
  num::NoGradGuard no_grad;
  const auto& cfg = model.config();
  constexpr std::size_t kBatch = 64;
  double total = 0.0;
  for (std::size_t b = 0; b < frames.size(); b += kBatch) {
    const std::size_t e = std::min(frames.size(), b + kBatch);
    const Tensor x = load_batch(data, cfg, frames, b, e);
    const Tensor z = model.encode(x);
    std::vector<std::int32_t> ids(static_cast<std::size_t>(z.dim(0)));
    model.codebook().quantize(z.data().data(), z.dim(0), ids.data());
    std::vector<float> zq(static_cast<std::size_t>(z.numel()));
    model.codebook().gather(ids, zq.data());
    const Tensor uhat = model.decode(Tensor(z.shape(), std::move(zq)), x.dim(0));
    const std::int64_t fs = cfg.frame_size();
    for (std::size_t i = 0; i < e - b; ++i) {
      double num = 0, den = 0;
      for (std::int64_t k = 0; k < fs; ++k) {
        const double u = x.data()[i * fs + k];
        const double d = uhat.data()[i * fs + k] - u;
        num += d * d;
        den += u * u;
      }
      total += den > 0 ? std::sqrt(num / den) : std::sqrt(num);
    }
  }
  return total / static_cast<double>(frames.size());
}

VqTrainResult train_vqvae(const pde::Dataset& data, const VqConfig& config, const VqTrainConfig& train,
                          const fs::path& out_dir) {
  config.validate();
  if (config.grid != data.profile().grid) {
    throw std::invalid_argument("vq config grid does not match the dataset grid");
  }
  if (train.epochs <= 0 || train.batch_size <= 0) throw std::invalid_argument("epochs and batch_size must be positive");
  std::vector<FrameRef> train_frames, val_frames;
  for (auto e : data.train().envs)
    for (auto j = data.train().traj_begin; j < data.train().traj_end; ++j)
      for (std::int64_t t = 0; t < data.frames(); ++t) train_frames.push_back({e, j, t});
  for (auto e : data.test().envs)
    for (auto j = data.test().traj_begin; j < data.test().traj_end; ++j)
      for (std::int64_t t = 0; t < data.frames(); ++t) val_frames.push_back({e, j, t});
  num::Rng split_rng(num::hash_seed({train.seed, num::hash_string("vq-val")}));
  for (std::size_t i = val_frames.size(); i > 1; --i) std::swap(val_frames[i - 1], val_frames[split_rng.uniform_int(0, i - 1)]);
  if (static_cast<std::int64_t>(val_frames.size()) > train.max_val_frames) val_frames.resize(train.max_val_frames);

  fs::create_directories(out_dir);
  std::ofstream log(out_dir / "train_log.jsonl", std::ios::trunc);
  if (!log) throw num::IoError("cannot open " + (out_dir / "train_log.jsonl").string());

  VqModel model(config);
  num::AdamConfig adam_cfg;
  adam_cfg.lr = train.lr;
  adam_cfg.weight_decay = train.weight_decay;
  num::Adam adam(model.parameters(), adam_cfg);
  num::Rng rng(num::hash_seed({train.seed, num::hash_string("vq-train")}));
  const auto B = static_cast<std::size_t>(train.batch_size);
  const std::int64_t steps_per_epoch = static_cast<std::int64_t>((train_frames.size() + B - 1) / B);
  const std::int64_t total = steps_per_epoch * train.epochs;
  const std::int64_t warmup = train.warmup_steps >= 0 ? train.warmup_steps : num::default_warmup(total);

  auto shuffle = [&] {
    for (std::size_t i = train_frames.size(); i > 1; --i) std::swap(train_frames[i - 1], train_frames[rng.uniform_int(0, i - 1)]);
  };
  shuffle();
  {
    const std::size_t n = std::min(train_frames.size(), std::max<std::size_t>(B, 256));
    init_codebook(model, load_batch(data, config, train_frames, 0, n), rng);
  }

  nlohmann::json meta = {{"norm_scale", data.norm_scale()},
                         {"family", pde::family_name(data.family())},
                         {"dataset", fs::absolute(data.dir()).string()},
                         {"train", {{"epochs", train.epochs}, {"batch_size", train.batch_size}, {"lr", train.lr},
                                    {"weight_decay", train.weight_decay}, {"seed", train.seed}}}};
  if (!train.echo.is_null()) meta["run_config"] = train.echo;

  VqTrainResult result;
  const auto t_start = std::chrono::steady_clock::now();
  std::int64_t step = 0;
  for (int epoch = 1; epoch <= train.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle();
    model.codebook().reset_usage();
    double loss_sum = 0, recon_sum = 0;
    for (std::size_t b = 0; b < train_frames.size(); b += B) {
      const std::size_t e = std::min(train_frames.size(), b + B);
      const Tensor x = load_batch(data, config, train_frames, b, e);
      const double lr = num::cosine_lr(step, total, train.lr, warmup);
      const auto out = train_step(model, adam, x, lr, rng);
      if (!std::isfinite(out.loss)) {
        throw TrainingError("non-finite VQ loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                            "; last good checkpoint: " + (out_dir / "checkpoint").string());
      }
      loss_sum += out.loss * static_cast<double>(e - b);
      recon_sum += out.recon * static_cast<double>(e - b);
      ++step;
    }
    VqEpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_sum / static_cast<double>(train_frames.size());
    st.train_recon = recon_sum / static_cast<double>(train_frames.size());
    st.usage = model.codebook().usage();
    st.val_recon = reconstruction_error(model, data, val_frames);
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back(st);
    log << nlohmann::json{{"epoch", epoch}, {"step", step}, {"train_loss", st.train_loss},
                          {"train_recon_rel_l2", st.train_recon}, {"val_recon_rel_l2", st.val_recon},
                          {"codebook_usage", st.usage}, {"reseeded", model.codebook().reseeded()},
                          {"seconds", st.seconds}}
               .dump()
        << "\n"
        << std::flush;
    spdlog::info("vq epoch {}/{}: loss {:.4f} recon {:.4f} val {:.4f} usage {:.3f} ({:.1f}s)", epoch, train.epochs,
                 st.train_loss, st.train_recon, st.val_recon, st.usage, st.seconds);
    meta["epoch"] = epoch;
    meta["val_recon_rel_l2"] = st.val_recon;
    meta["codebook_usage"] = st.usage;
    model.save(out_dir / "checkpoint", meta);
    result.val_recon = st.val_recon;
    result.usage = st.usage;
    if (train.target_recon > 0 && st.val_recon <= train.target_recon && st.usage >= train.target_usage) break;
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

std::vector<double> overfit_vqvae(VqModel& model, const std::vector<float>& frames, int steps, double lr,
                                  std::uint64_t seed) {
  const auto& cfg = model.config();
  const std::int64_t n = static_cast<std::int64_t>(frames.size()) / cfg.frame_size();
  const Tensor x(batch_shape(cfg, n), frames);
  num::Rng rng(seed);
  init_codebook(model, x, rng);
  num::AdamConfig adam_cfg;
  adam_cfg.lr = lr;
  adam_cfg.weight_decay = 0.0;
  num::Adam adam(model.parameters(), adam_cfg);
  std::vector<double> recon;
  for (int s = 0; s < steps; ++s) {
    recon.push_back(train_step(model, adam, x, num::cosine_lr(s, steps, lr, steps / 20), rng).recon);
  }
  return recon;
}

}  // namespace zebra::vq
