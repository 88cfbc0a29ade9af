// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "zebra/num/rng.hpp"

namespace zebra::seq {

/// Content ids [0, K) followed by 8 special ids: bos, eos, bot, eot, three
/// reserved ids and pad.
struct Vocabulary {
  std::int32_t K = 256;
  static constexpr std::int32_t kSpecials = 8;

  std::int32_t bos() const { return K; }
  std::int32_t eos() const { return K + 1; }
  std::int32_t bot() const { return K + 2; }
  std::int32_t eot() const { return K + 3; }
  std::int32_t pad() const { return K + 7; }
  std::int32_t size() const { return K + kSpecials; }
  bool is_content(std::int32_t id) const { return id >= 0 && id < K; }
  std::string name(std::int32_t id) const;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::int64_t position, const std::string& what);
  std::int64_t position() const { return position_; }

 private:
  std::int64_t position_;
};

/// Content range [begin, end) of one trajectory inside a sequence.
struct TrajectorySpan {
  std::int64_t begin = 0;
  std::int64_t end = 0;
  std::int64_t length() const { return end - begin; }
};

/// <bot>[s1]<eot> ... <bot>[sn]<eot>
struct TokenSequence {
  std::vector<std::int32_t> ids;
  std::vector<TrajectorySpan> spans;
  std::int64_t tokens_per_frame = 0;
  std::int64_t env = -1;

  int n() const { return static_cast<int>(spans.size()); }
};

/// Token grid of one trajectory, frames * tokens_per_frame ids.
struct TokenTrajectory {
  std::int64_t env = 0;
  std::int64_t traj = 0;
  std::vector<std::int32_t> tokens;
};

inline constexpr int kMaxContext = 6;

/// Frames [start, start + m) of each trajectory, in the given order. Throws
/// std::invalid_argument for n outside [1, 6], short trajectories, mixed
/// environments or non-content ids.
TokenSequence build_context_sequence(const std::vector<const TokenTrajectory*>& trajs, std::int64_t start,
                                     std::int64_t m, std::int64_t tokens_per_frame, const Vocabulary& vocab);

/// n * (m * tokens_per_frame + 2)
std::int64_t sequence_length(std::int64_t n, std::int64_t m, std::int64_t tokens_per_frame);

struct ParsedSequence {
  bool has_bos = false;
  bool has_eos = false;
  std::vector<TrajectorySpan> spans;
  std::int64_t empty_trajectories = 0;
  /// Set when the last trajectory has no <eot> (prompts, partial output).
  bool open_tail = false;
};

struct ParseOptions {
  bool allow_open_tail = false;
};

/// Validates [<bos>] (<bot> content <eot>)* [<eos>] and recovers spans.
/// Throws ParseError naming the first offending index.
ParsedSequence parse_sequence(std::span<const std::int32_t> ids, std::int64_t tokens_per_frame,
                              const Vocabulary& vocab, ParseOptions options = {});

struct PackedWindow {
  std::vector<std::int32_t> ids;
  /// 1 for real tokens, 0 for padding.
  std::vector<std::uint8_t> mask;
};

/// Greedy first-fit packing of <bos>S<eos> units into windows of `window`
/// ids, padded with vocab.pad(). Throws std::invalid_argument when a unit
/// does not fit in an empty window.
std::vector<PackedWindow> pack_training_stream(const std::vector<std::vector<std::int32_t>>& sequences,
                                               std::int64_t window, const Vocabulary& vocab);

/// Inverse of packing for one window: the S parts in window order.
std::vector<std::vector<std::int32_t>> unpack_window(std::span<const std::int32_t> window, const Vocabulary& vocab);

/// Segment index per position (incremented at each <bos>), for optional
/// attention masking across packed sequences.
std::vector<std::int32_t> segment_ids(std::span<const std::int32_t> window, const Vocabulary& vocab);

/// Draws training sequences: an environment, n uniform in [1, n_max], n
/// trajectories (distinct while the environment has enough) and a common
/// start frame.
class ContextSampler {
 public:
  ContextSampler(std::vector<TokenTrajectory> pool, std::int64_t tokens_per_frame, Vocabulary vocab,
                 int n_max = kMaxContext, std::int64_t m = 9);

  TokenSequence sample(num::Rng& rng) const;
  std::int64_t frames() const { return frames_; }
  const std::vector<TokenTrajectory>& pool() const { return pool_; }

 private:
  std::vector<TokenTrajectory> pool_;
  std::vector<std::vector<std::size_t>> by_env_;
  std::int64_t tpf_;
  Vocabulary vocab_;
  int n_max_;
  std::int64_t m_;
  std::int64_t frames_ = 0;
};

/// u64 LE header length, JSON header, then u32 LE ids.
void write_token_file(const std::filesystem::path& path, const nlohmann::json& header,
                      std::span<const std::int32_t> ids);
std::pair<nlohmann::json, std::vector<std::int32_t>> read_token_file(const std::filesystem::path& path);

/// Shard of equal-length windows; the header records window, vocab and count.
void write_shard(const std::filesystem::path& path, const std::vector<PackedWindow>& windows, const Vocabulary& vocab,
                 nlohmann::json extra = {});
std::vector<PackedWindow> read_shard(const std::filesystem::path& path, const Vocabulary& vocab);

}  // namespace zebra::seq
