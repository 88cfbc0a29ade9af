// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "zebra/lm/model.hpp"
#include "zebra/num/rng.hpp"

namespace zebra::lm {

/// Incremental decoding state: per-layer rotated keys and values for every
/// position fed so far. Copying a session forks the cache.
class Session {
 public:
  explicit Session(const LmModel& model);

  /// Appends `ids` and returns their logits, [ids.size(), V] row-major.
  /// Throws std::length_error when the context would exceed max_context.
  std::vector<float> feed(std::span<const std::int32_t> ids);
  std::int64_t length() const { return length_; }

 private:
  const LmModel* model_;
  std::int64_t length_ = 0;
  std::vector<std::vector<float>> keys_;
  std::vector<std::vector<float>> values_;
};

struct SampleOptions {
  /// 0 selects argmax (lowest index on ties).
  double temperature = 1.0;
  /// Restrict sampling to content ids.
  bool forbid_specials = true;
};

std::int32_t sample_token(std::span<const float> logits, std::int32_t content_vocab, const SampleOptions& options,
                          num::Rng& rng);

/// Continues `prompt` by `count` tokens with the KV cache.
std::vector<std::int32_t> generate_tokens(const LmModel& model, std::span<const std::int32_t> prompt,
                                          std::int64_t count, const SampleOptions& options, num::Rng& rng);

/// Reference path that reruns the full forward for every new token.
std::vector<std::int32_t> generate_tokens_uncached(const LmModel& model, std::span<const std::int32_t> prompt,
                                                   std::int64_t count, const SampleOptions& options, num::Rng& rng);

/// `samples` continuations of one prompt. The prompt is prefilled once;
/// stream s draws from Rng(hash_seed({seed, s})), so results do not depend
/// on `threads`.
std::vector<std::vector<std::int32_t>> generate_samples(const LmModel& model, std::span<const std::int32_t> prompt,
                                                        std::int64_t count, const SampleOptions& options,
                                                        std::uint64_t seed, int samples, int threads = 1);

}  // namespace zebra::lm
