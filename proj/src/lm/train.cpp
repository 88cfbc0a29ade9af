// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/lm/train.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <string>

#include "zebra/num/checkpoint.hpp"
#include "zebra/num/ops.hpp"
#include "zebra/num/optim.hpp"

namespace zebra::lm {

namespace fs = std::filesystem;

std::vector<seq::PackedWindow> sample_windows(const seq::ContextSampler& sampler, std::int64_t count,
                                              std::int64_t window, const seq::Vocabulary& vocab, num::Rng& rng) {
  std::vector<std::vector<std::int32_t>> seqs;
  seqs.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) seqs.push_back(sampler.sample(rng).ids);
  auto windows = seq::pack_training_stream(seqs, window, vocab);
  for (std::size_t i = windows.size(); i > 1; --i) std::swap(windows[i - 1], windows[rng.uniform_int(0, i - 1)]);
  return windows;
}

double evaluate_loss(const LmModel& model, const std::vector<seq::PackedWindow>& windows, int batch) {
  num::NoGradGuard no_grad;
  double total = 0;
  std::int64_t count = 0;
  for (std::size_t b = 0; b < windows.size(); b += static_cast<std::size_t>(batch)) {
    std::vector<const seq::PackedWindow*> group;
    for (std::size_t i = b; i < std::min(windows.size(), b + batch); ++i) group.push_back(&windows[i]);
    const auto r = lm_loss(model, group);
    if (r.skipped) continue;
    total += static_cast<double>(r.loss.item()) * static_cast<double>(r.counted);
    count += r.counted;
  }
  return count > 0 ? total / static_cast<double>(count) : 0.0;
}

LmTrainResult train_lm(LmModel& model, const seq::ContextSampler& train, const std::vector<seq::PackedWindow>& val,
                       const LmTrainConfig& config, const fs::path& out_dir) {
  return train_lm(model, EpochSampler([&](int) -> const seq::ContextSampler& { return train; }), val, config,
                  out_dir);
}

LmTrainResult train_lm(LmModel& model, const EpochSampler& sampler_for, const std::vector<seq::PackedWindow>& val,
                       const LmTrainConfig& config, const fs::path& out_dir) {
  if (config.epochs <= 0 || config.batch_size <= 0 || config.grad_accum <= 0) {
    throw std::invalid_argument("epochs, batch_size and grad_accum must be positive");
  }
  const auto& mc = model.config();
  const seq::Vocabulary vocab{mc.content_vocab};
  const std::int64_t per_epoch = config.sequences_per_epoch > 0
                                     ? config.sequences_per_epoch
                                     : static_cast<std::int64_t>(sampler_for(1).pool().size());

  fs::create_directories(out_dir);
  std::ofstream log(out_dir / "train_log.jsonl", std::ios::trunc);
  if (!log) throw num::IoError("cannot open " + (out_dir / "train_log.jsonl").string());

  num::AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;
  adam_cfg.weight_decay = config.weight_decay;
  const auto params = model.parameters();
  num::Adam adam(params, adam_cfg);
  num::Rng rng(num::hash_seed({config.seed, num::hash_string("lm-train")}));

  auto windows = sample_windows(sampler_for(1), per_epoch, mc.max_context, vocab, rng);
  const std::int64_t micro = config.batch_size;
  const std::int64_t per_step = micro * config.grad_accum;
  // Window counts vary a little between epochs; the schedule length comes
  // from the first epoch and later steps clamp to its end.
  const std::int64_t total =
      std::max<std::int64_t>(1, (static_cast<std::int64_t>(windows.size()) + per_step - 1) / per_step) * config.epochs;
  const std::int64_t warmup = config.warmup_steps >= 0 ? config.warmup_steps : num::default_warmup(total);

  nlohmann::json meta = {{"train",
                          {{"epochs", config.epochs},
                           {"batch_size", config.batch_size},
                           {"grad_accum", config.grad_accum},
                           {"lr", config.lr},
                           {"weight_decay", config.weight_decay},
                           {"clip", config.clip},
                           {"seed", config.seed},
                           {"augment", config.augment},
                           {"sequences_per_epoch", per_epoch}}}};
  if (!config.echo.is_null()) meta["run_config"] = config.echo;

  LmTrainResult result;
  const auto t_start = std::chrono::steady_clock::now();
  std::int64_t step = 0;
  if (!val.empty()) {
    result.initial_val_loss = evaluate_loss(model, val, config.batch_size);
    log << nlohmann::json{{"step", 0}, {"epoch", 0}, {"val_loss", result.initial_val_loss}}.dump() << "\n";
    spdlog::info("lm initial val {:.4f}", result.initial_val_loss);
  }
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    if (epoch > 1) windows = sample_windows(sampler_for(epoch), per_epoch, mc.max_context, vocab, rng);
    double loss_sum = 0, lr = 0;
    std::int64_t loss_count = 0;
    for (std::size_t b = 0; b < windows.size(); b += static_cast<std::size_t>(per_step)) {
      adam.zero_grad();
      const std::size_t e = std::min(windows.size(), b + static_cast<std::size_t>(per_step));
      std::int64_t counted = 0;
      // Micro-batch losses are reweighted by token count so accumulation
      // matches one large batch.
      std::int64_t step_tokens = 0;
      std::vector<std::vector<const seq::PackedWindow*>> groups;
      for (std::size_t m = b; m < e; m += static_cast<std::size_t>(micro)) {
        std::vector<const seq::PackedWindow*> group;
        for (std::size_t i = m; i < std::min(e, m + static_cast<std::size_t>(micro)); ++i) group.push_back(&windows[i]);
        groups.push_back(std::move(group));
      }
      for (const auto& g : groups)
        for (const auto* w : g)
          for (std::size_t i = 1; i < w->ids.size(); ++i)
            step_tokens += w->mask[i] != 0 && (mc.loss_on_specials || vocab.is_content(w->ids[i]));
      double step_loss = 0;
      for (const auto& g : groups) {
        auto r = lm_loss(model, g);
        if (r.skipped) continue;
        const double value = r.loss.item();
        if (!std::isfinite(value)) {
          throw TrainingError("non-finite transformer loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(step) + "; last good checkpoint: " + (out_dir / "checkpoint").string());
        }
        const double weight = static_cast<double>(r.counted) / static_cast<double>(std::max<std::int64_t>(1, step_tokens));
        num::backward(num::scale(r.loss, static_cast<float>(weight)));
        step_loss += value * static_cast<double>(r.counted);
        counted += r.counted;
      }
      if (counted == 0) continue;
      num::clip_grad_norm(params, config.clip);
      lr = num::cosine_lr(std::min(step, total - 1), total, config.lr, warmup);
      if (!adam.step(lr)) {
        throw TrainingError("non-finite gradient at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(step) + "; last good checkpoint: " + (out_dir / "checkpoint").string());
      }
      loss_sum += step_loss;
      loss_count += counted;
      ++step;
      if (config.log_every > 0 && step % config.log_every == 0) {
        log << nlohmann::json{{"step", step}, {"epoch", epoch}, {"lr", lr},
                              {"loss", step_loss / static_cast<double>(counted)}}
                   .dump()
            << "\n";
      }
    }
    LmEpochStats st;
    st.epoch = epoch;
    st.step = step;
    st.lr = lr;
    st.train_loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0;
    st.val_loss = val.empty() ? 0.0 : evaluate_loss(model, val, config.batch_size);
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back(st);
    log << nlohmann::json{{"step", step},           {"epoch", epoch},         {"lr", lr},
                          {"loss", st.train_loss}, {"val_loss", st.val_loss}, {"seconds", st.seconds}}
               .dump()
        << "\n"
        << std::flush;
    spdlog::info("lm epoch {}/{}: loss {:.4f} val {:.4f} lr {:.2e} ({:.1f}s)", epoch, config.epochs, st.train_loss,
                 st.val_loss, lr, st.seconds);
    meta["epoch"] = epoch;
    meta["step"] = step;
    meta["val_loss"] = st.val_loss;
    model.save(out_dir / "checkpoint", meta);
    result.val_loss = st.val_loss;
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

std::vector<double> overfit_lm(LmModel& model, const seq::PackedWindow& window, int steps, double lr, double target) {
  num::AdamConfig cfg;
  cfg.lr = lr;
  cfg.weight_decay = 0.0;
  const auto params = model.parameters();
  num::Adam adam(params, cfg);
  std::vector<double> losses;
  const std::vector<const seq::PackedWindow*> group = {&window};
  for (int s = 0; s < steps; ++s) {
    adam.zero_grad();
    const auto r = lm_loss(model, group);
    if (r.skipped) break;
    const double value = r.loss.item();
    losses.push_back(value);
    if (!std::isfinite(value)) throw TrainingError("non-finite loss during overfit");
    if (value < target) break;
    num::backward(r.loss);
    num::clip_grad_norm(params, 1.0);
    if (!adam.step(lr)) throw TrainingError("non-finite gradient during overfit");
  }
  return losses;
}

}  // namespace zebra::lm
