// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/lm/generate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>

#include "zebra/num/ops.hpp"

namespace zebra::lm {

using num::Tensor;

namespace {

void check_room(const LmConfig& cfg, std::int64_t have, std::int64_t add) {
  if (have + add > cfg.max_context) {
    throw std::length_error("context overflow: " + std::to_string(have) + " + " + std::to_string(add) +
                            " tokens exceeds max_context " + std::to_string(cfg.max_context));
  }
}

}  // namespace

Session::Session(const LmModel& model) : model_(&model) {
  const auto& cfg = model.config();
  keys_.assign(cfg.depth, std::vector<float>());
  values_.assign(cfg.depth, std::vector<float>());
}

std::vector<float> Session::feed(std::span<const std::int32_t> ids) {
  const auto& cfg = model_->config();
  const auto t = static_cast<std::int64_t>(ids.size());
  if (t == 0) return {};
  check_room(cfg, length_, t);
  num::NoGradGuard no_grad;
  const std::int64_t C = cfg.hidden, H = cfg.heads, D = cfg.head_dim();
  const std::int64_t offset = length_;
  Tensor x = num::embedding(model_->embed_, ids, {1, t});
  for (std::size_t l = 0; l < model_->layers_.size(); ++l) {
    const auto& L = model_->layers_[l];
    Tensor h = num::rms_norm(x, L.attn_norm);
    Tensor q = num::rope(num::reshape(num::matmul(h, L.wq), {1, t, H, D}), offset, cfg.rope_base);
    Tensor k = num::rope(num::reshape(num::matmul(h, L.wk), {1, t, H, D}), offset, cfg.rope_base);
    Tensor v = num::matmul(h, L.wv);
    auto& kc = keys_[l];
    auto& vc = values_[l];
    kc.insert(kc.end(), k.data().begin(), k.data().end());
    vc.insert(vc.end(), v.data().begin(), v.data().end());
    std::vector<float> att(static_cast<std::size_t>(t * C));
    num::attention_forward_kernel<float>(q.data().data(), kc.data(), vc.data(), att.data(), nullptr, 1, t,
                                         offset + t, H, D, offset, t * C, (offset + t) * C, nullptr, 0);
    Tensor a({1, t, C}, std::move(att));
    x = num::add(x, num::matmul(a, L.wo));
    h = num::rms_norm(x, L.mlp_norm);
    Tensor g = num::mul(num::silu(num::matmul(h, L.w_gate)), num::matmul(h, L.w_up));
    x = num::add(x, num::matmul(g, L.w_down));
  }
  length_ += t;
  Tensor logits = num::matmul(num::rms_norm(x, model_->final_norm_), model_->head_);
  return {logits.data().begin(), logits.data().end()};
}

std::int32_t sample_token(std::span<const float> logits, std::int32_t content_vocab, const SampleOptions& options,
                          num::Rng& rng) {
  const auto n = options.forbid_specials ? std::min<std::size_t>(logits.size(), content_vocab) : logits.size();
  if (n == 0) throw std::invalid_argument("sample_token: empty logits");
  if (options.temperature < 0) throw std::invalid_argument("sample_token: negative temperature");
  if (options.temperature == 0) {
    return static_cast<std::int32_t>(std::max_element(logits.begin(), logits.begin() + n) - logits.begin());
  }
  const double top = *std::max_element(logits.begin(), logits.begin() + n);
  std::vector<double> p(n);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = std::exp((logits[i] - top) / options.temperature);
    total += p[i];
  }
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < n; ++i) {
    u -= p[i];
    if (u < 0) return static_cast<std::int32_t>(i);
  }
  // u landed on the rounding slack at the top end.
  for (std::size_t i = n; i-- > 0;) {
    if (p[i] > 0) return static_cast<std::int32_t>(i);
  }
  return 0;
}

std::vector<std::int32_t> generate_tokens(const LmModel& model, std::span<const std::int32_t> prompt,
                                          std::int64_t count, const SampleOptions& options, num::Rng& rng) {
  const auto& cfg = model.config();
  if (prompt.empty()) throw std::invalid_argument("generate: empty prompt");
  check_room(cfg, static_cast<std::int64_t>(prompt.size()), count);
  Session session(model);
  std::vector<float> logits = session.feed(prompt);
  std::vector<std::int32_t> out;
  out.reserve(static_cast<std::size_t>(count));
  const auto V = static_cast<std::size_t>(cfg.vocab);
  std::span<const float> last(logits.data() + logits.size() - V, V);
  for (std::int64_t i = 0; i < count; ++i) {
    const std::int32_t id = sample_token(last, cfg.content_vocab, options, rng);
    out.push_back(id);
    if (i + 1 == count) break;
    logits = session.feed(std::span(&id, 1));
    last = std::span<const float>(logits.data(), V);
  }
  return out;
}

std::vector<std::int32_t> generate_tokens_uncached(const LmModel& model, std::span<const std::int32_t> prompt,
                                                   std::int64_t count, const SampleOptions& options, num::Rng& rng) {
  const auto& cfg = model.config();
  if (prompt.empty()) throw std::invalid_argument("generate: empty prompt");
  check_room(cfg, static_cast<std::int64_t>(prompt.size()), count);
  num::NoGradGuard no_grad;
  std::vector<std::int32_t> ids(prompt.begin(), prompt.end());
  std::vector<std::int32_t> out;
  const auto V = static_cast<std::size_t>(cfg.vocab);
  for (std::int64_t i = 0; i < count; ++i) {
    const auto len = static_cast<std::int64_t>(ids.size());
    const Tensor logits = model.forward(ids, 1, len);
    std::span<const float> last(logits.data().data() + (len - 1) * V, V);
    const std::int32_t id = sample_token(last, cfg.content_vocab, options, rng);
    out.push_back(id);
    ids.push_back(id);
  }
  return out;
}

std::vector<std::vector<std::int32_t>> generate_samples(const LmModel& model, std::span<const std::int32_t> prompt,
                                                        std::int64_t count, const SampleOptions& options,
                                                        std::uint64_t seed, int samples, int threads) {
  const auto& cfg = model.config();
  if (prompt.empty()) throw std::invalid_argument("generate: empty prompt");
  check_room(cfg, static_cast<std::int64_t>(prompt.size()), count);
  Session prefilled(model);
  const std::vector<float> prompt_logits = prefilled.feed(prompt);
  const auto V = static_cast<std::size_t>(cfg.vocab);
  const std::vector<float> first(prompt_logits.end() - static_cast<std::ptrdiff_t>(V), prompt_logits.end());

  std::vector<std::vector<std::int32_t>> out(static_cast<std::size_t>(std::max(samples, 0)));
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    try {
      for (int s = next++; s < samples; s = next++) {
        num::Rng rng(num::hash_seed({seed, static_cast<std::uint64_t>(s)}));
        Session session = prefilled;
        std::vector<float> logits = first;
        auto& seq = out[static_cast<std::size_t>(s)];
        seq.reserve(static_cast<std::size_t>(count));
        for (std::int64_t i = 0; i < count; ++i) {
          const std::int32_t id = sample_token(logits, cfg.content_vocab, options, rng);
          seq.push_back(id);
          if (i + 1 < count) logits = session.feed(std::span(&id, 1));
        }
      }
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  };
  const int n_threads = std::clamp(threads, 1, std::max(samples, 1));
  std::vector<std::thread> pool;
  for (int i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace zebra::lm
