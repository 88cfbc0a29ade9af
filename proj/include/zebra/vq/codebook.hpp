// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "zebra/num/rng.hpp"

namespace zebra::vq {

/// K code vectors of dimension d, re-estimated by exponential moving
/// averages of the encoder outputs assigned to them.
class Codebook {
 public:
  Codebook(int size, int dim, double decay = 0.99, double eps = 1e-5, std::int64_t dead_after = 2000);

  int size() const { return size_; }
  int dim() const { return dim_; }
  double decay() const { return decay_; }
  std::span<const float> entries() const { return entries_; }
  const float* entry(int k) const { return entries_.data() + static_cast<std::size_t>(k) * dim_; }

  /// Replaces the entries and resets the averages so that an update with
  /// decay 1 leaves them unchanged.
  void set_entries(std::span<const float> values);
  /// Picks entries from n latent rows (without replacement when n >= K).
  void init_from(const float* z, std::int64_t n, num::Rng& rng);
  void set_state(std::span<const float> entries, std::span<const float> cluster_size,
                 std::span<const float> embed_sum);

  /// Nearest entry per row of z [n, d]; ties go to the lowest index.
  void quantize(const float* z, std::int64_t n, std::int32_t* out) const;
  /// Writes entries[ids] as rows [ids.size(), d]. Throws on ids outside [0, K).
  void gather(std::span<const std::int32_t> ids, float* out) const;

  /// One EMA step from the rows z [n, d] and their assignments.
  void ema_update(const float* z, const std::int32_t* ids, std::int64_t n, num::Rng& rng);

  const std::vector<double>& cluster_size() const { return cluster_size_; }
  const std::vector<double>& embed_sum() const { return embed_sum_; }
  std::int64_t updates() const { return updates_; }
  std::int64_t reseeded() const { return reseeded_; }

  /// Codes assigned at least once since the last reset_usage(), over K.
  double usage() const;
  void reset_usage();

 private:
  std::vector<double> smoothed_counts() const;
  void refresh_entries();

  int size_;
  int dim_;
  double decay_;
  double eps_;
  std::int64_t dead_after_;
  std::vector<float> entries_;
  std::vector<double> cluster_size_;
  std::vector<double> embed_sum_;
  std::vector<std::int64_t> last_used_;
  std::vector<std::uint8_t> hit_;
  std::int64_t updates_ = 0;
  std::int64_t reseeded_ = 0;
};

}  // namespace zebra::vq
