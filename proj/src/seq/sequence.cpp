// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/seq/sequence.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <numeric>

#include "zebra/num/checkpoint.hpp"

namespace zebra::seq {

std::string Vocabulary::name(std::int32_t id) const {
  if (is_content(id)) return std::to_string(id);
  if (id == bos()) return "<bos>";
  if (id == eos()) return "<eos>";
  if (id == bot()) return "<bot>";
  if (id == eot()) return "<eot>";
  if (id == pad()) return "<pad>";
  if (id > eot() && id < pad()) return "<reserved" + std::to_string(id - K - 4) + ">";
  return "<invalid " + std::to_string(id) + ">";
}

ParseError::ParseError(std::int64_t position, const std::string& what)
    : std::runtime_error("position " + std::to_string(position) + ": " + what), position_(position) {}

std::int64_t sequence_length(std::int64_t n, std::int64_t m, std::int64_t tokens_per_frame) {
  return n * (m * tokens_per_frame + 2);
}

TokenSequence build_context_sequence(const std::vector<const TokenTrajectory*>& trajs, std::int64_t start,
                                     std::int64_t m, std::int64_t tokens_per_frame, const Vocabulary& vocab) {
  const auto n = static_cast<std::int64_t>(trajs.size());
  if (n < 1 || n > kMaxContext) {
    throw std::invalid_argument("context size n=" + std::to_string(n) + " outside [1, " +
                                std::to_string(kMaxContext) + "]");
  }
  if (m < 1 || start < 0 || tokens_per_frame < 1) throw std::invalid_argument("need m >= 1, start >= 0, tpf >= 1");
  TokenSequence s;
  s.tokens_per_frame = tokens_per_frame;
  s.env = trajs.front()->env;
  s.ids.reserve(static_cast<std::size_t>(sequence_length(n, m, tokens_per_frame)));
  for (const auto* t : trajs) {
    if (t->env != s.env) {
      throw std::invalid_argument("context mixes environments " + std::to_string(s.env) + " and " +
                                  std::to_string(t->env));
    }
    const auto frames = static_cast<std::int64_t>(t->tokens.size()) / tokens_per_frame;
    if (static_cast<std::int64_t>(t->tokens.size()) % tokens_per_frame != 0 || frames < start + m) {
      throw std::invalid_argument("trajectory " + std::to_string(t->traj) + " has " + std::to_string(frames) +
                                  " frames, need " + std::to_string(start + m));
    }
    s.ids.push_back(vocab.bot());
    TrajectorySpan span;
    span.begin = static_cast<std::int64_t>(s.ids.size());
    for (std::int64_t i = start * tokens_per_frame; i < (start + m) * tokens_per_frame; ++i) {
      const std::int32_t id = t->tokens[i];
      if (!vocab.is_content(id)) {
        throw std::invalid_argument("trajectory " + std::to_string(t->traj) + " holds non-content id " +
                                    std::to_string(id) + " at " + std::to_string(i));
      }
      s.ids.push_back(id);
    }
    span.end = static_cast<std::int64_t>(s.ids.size());
    s.spans.push_back(span);
    s.ids.push_back(vocab.eot());
  }
  return s;
}

ParsedSequence parse_sequence(std::span<const std::int32_t> ids, std::int64_t tokens_per_frame,
                              const Vocabulary& vocab, ParseOptions options) {
  ParsedSequence out;
  bool inside = false;
  TrajectorySpan span;
  const auto size = static_cast<std::int64_t>(ids.size());
  for (std::int64_t i = 0; i < size; ++i) {
    const std::int32_t id = ids[i];
    if (id < 0 || id >= vocab.size()) {
      throw ParseError(i, "id " + std::to_string(id) + " outside vocabulary [0, " + std::to_string(vocab.size()) + ")");
    }
    if (vocab.is_content(id)) {
      if (!inside) throw ParseError(i, "content id " + std::to_string(id) + " outside a trajectory");
      continue;
    }
    if (id == vocab.bos()) {
      if (i != 0) throw ParseError(i, "<bos> is only allowed at position 0");
      out.has_bos = true;
    } else if (id == vocab.eos()) {
      if (inside) throw ParseError(i, "<eos> inside the trajectory opened at " + std::to_string(span.begin - 1));
      if (i != size - 1) throw ParseError(i + 1, "tokens after <eos>");
      out.has_eos = true;
    } else if (id == vocab.bot()) {
      if (inside) throw ParseError(i, "<bot> while the trajectory opened at " + std::to_string(span.begin - 1) + " is open");
      inside = true;
      span.begin = i + 1;
    } else if (id == vocab.eot()) {
      if (!inside) throw ParseError(i, "<eot> without <bot>");
      span.end = i;
      if (span.length() % tokens_per_frame != 0) {
        throw ParseError(i, "trajectory of " + std::to_string(span.length()) +
                                " ids is not a multiple of tokens_per_frame " + std::to_string(tokens_per_frame));
      }
      if (span.length() == 0) ++out.empty_trajectories;
      out.spans.push_back(span);
      inside = false;
    } else {
      throw ParseError(i, "reserved id " + vocab.name(id));
    }
  }
  if (inside) {
    if (!options.allow_open_tail) throw ParseError(size, "missing <eot> for the trajectory opened at " + std::to_string(span.begin - 1));
    span.end = size;
    out.spans.push_back(span);
    out.open_tail = true;
  }
  return out;
}

std::vector<PackedWindow> pack_training_stream(const std::vector<std::vector<std::int32_t>>& sequences,
                                               std::int64_t window, const Vocabulary& vocab) {
  std::vector<PackedWindow> out;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const auto unit = static_cast<std::int64_t>(sequences[s].size()) + 2;
    if (unit > window) {
      throw std::invalid_argument("sequence " + std::to_string(s) + " needs " + std::to_string(unit) +
                                  " ids, window is " + std::to_string(window));
    }
    auto it = std::find_if(out.begin(), out.end(), [&](const PackedWindow& w) {
      return static_cast<std::int64_t>(w.ids.size()) + unit <= window;
    });
    if (it == out.end()) {
      out.emplace_back();
      it = out.end() - 1;
    }
    it->ids.push_back(vocab.bos());
    it->ids.insert(it->ids.end(), sequences[s].begin(), sequences[s].end());
    it->ids.push_back(vocab.eos());
  }
  for (auto& w : out) {
    w.mask.assign(w.ids.size(), 1);
    w.mask.resize(static_cast<std::size_t>(window), 0);
    w.ids.resize(static_cast<std::size_t>(window), vocab.pad());
  }
  return out;
}

std::vector<std::vector<std::int32_t>> unpack_window(std::span<const std::int32_t> window, const Vocabulary& vocab) {
  std::vector<std::vector<std::int32_t>> out;
  std::size_t i = 0;
  while (i < window.size() && window[i] != vocab.pad()) {
    if (window[i] != vocab.bos()) throw ParseError(static_cast<std::int64_t>(i), "expected <bos>, found " + vocab.name(window[i]));
    const auto end = std::find(window.begin() + static_cast<std::ptrdiff_t>(i), window.end(), vocab.eos());
    if (end == window.end()) throw ParseError(static_cast<std::int64_t>(i), "<bos> without matching <eos>");
    out.emplace_back(window.begin() + static_cast<std::ptrdiff_t>(i) + 1, end);
    i = static_cast<std::size_t>(end - window.begin()) + 1;
  }
  for (; i < window.size(); ++i) {
    if (window[i] != vocab.pad()) throw ParseError(static_cast<std::int64_t>(i), "non-pad id after padding started");
  }
  return out;
}

std::vector<std::int32_t> segment_ids(std::span<const std::int32_t> window, const Vocabulary& vocab) {
  std::vector<std::int32_t> out(window.size());
  std::int32_t seg = 0;
  for (std::size_t i = 0; i < window.size(); ++i) {
    if (window[i] == vocab.bos() && i > 0) ++seg;
    out[i] = seg;
  }
  return out;
}

ContextSampler::ContextSampler(std::vector<TokenTrajectory> pool, std::int64_t tokens_per_frame, Vocabulary vocab,
                               int n_max, std::int64_t m)
    : pool_(std::move(pool)), tpf_(tokens_per_frame), vocab_(vocab), n_max_(n_max), m_(m) {
  if (pool_.empty()) throw std::invalid_argument("context sampler needs at least one trajectory");
  if (n_max_ < 1 || n_max_ > kMaxContext) throw std::invalid_argument("n_max must lie in [1, 6]");
  frames_ = static_cast<std::int64_t>(pool_.front().tokens.size()) / tpf_;
  if (frames_ < m_) throw std::invalid_argument("trajectories have fewer frames than m");
  std::vector<std::int64_t> envs;
  for (const auto& t : pool_) envs.push_back(t.env);
  std::sort(envs.begin(), envs.end());
  envs.erase(std::unique(envs.begin(), envs.end()), envs.end());
  by_env_.resize(envs.size());
  for (std::size_t i = 0; i < pool_.size(); ++i) {
    if (static_cast<std::int64_t>(pool_[i].tokens.size()) != frames_ * tpf_) {
      throw std::invalid_argument("all trajectories must have the same number of frames");
    }
    const auto e = std::lower_bound(envs.begin(), envs.end(), pool_[i].env) - envs.begin();
    by_env_[static_cast<std::size_t>(e)].push_back(i);
  }
}

TokenSequence ContextSampler::sample(num::Rng& rng) const {
  const auto& members = by_env_[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(by_env_.size()) - 1))];
  const auto n = static_cast<std::size_t>(rng.uniform_int(1, n_max_));
  std::vector<std::size_t> order = members;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<std::int64_t>(i) - 1)]);
  std::vector<const TokenTrajectory*> picked;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t idx = i < order.size() ? order[i] : members[rng.uniform_int(0, static_cast<std::int64_t>(members.size()) - 1)];
    picked.push_back(&pool_[idx]);
  }
  const std::int64_t start = rng.uniform_int(0, frames_ - m_);
  return build_context_sequence(picked, start, m_, tpf_, vocab_);
}

void write_token_file(const std::filesystem::path& path, const nlohmann::json& header,
                      std::span<const std::int32_t> ids) {
  const std::string text = header.dump();
  const std::uint64_t len = text.size();
  std::vector<char> buf(sizeof(len) + text.size() + ids.size() * sizeof(std::uint32_t));
  std::memcpy(buf.data(), &len, sizeof(len));
  std::memcpy(buf.data() + sizeof(len), text.data(), text.size());
  std::memcpy(buf.data() + sizeof(len) + text.size(), ids.data(), ids.size() * sizeof(std::uint32_t));
  num::write_bytes(path, buf.data(), buf.size());
}

std::pair<nlohmann::json, std::vector<std::int32_t>> read_token_file(const std::filesystem::path& path) {
  const auto bytes = num::read_bytes(path);
  std::uint64_t len = 0;
  if (bytes.size() < sizeof(len)) throw num::IoError(path.string() + ": truncated token file");
  std::memcpy(&len, bytes.data(), sizeof(len));
  if (len > bytes.size() - sizeof(len) || (bytes.size() - sizeof(len) - len) % sizeof(std::uint32_t) != 0) {
    throw num::IoError(path.string() + ": corrupt token file header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + sizeof(len), bytes.begin() + static_cast<std::ptrdiff_t>(sizeof(len) + len));
  } catch (const nlohmann::json::parse_error& e) {
    throw num::IoError(path.string() + ": " + e.what());
  }
  std::vector<std::int32_t> ids((bytes.size() - sizeof(len) - len) / sizeof(std::uint32_t));
  std::memcpy(ids.data(), bytes.data() + sizeof(len) + len, ids.size() * sizeof(std::uint32_t));
  return {std::move(header), std::move(ids)};
}

void write_shard(const std::filesystem::path& path, const std::vector<PackedWindow>& windows, const Vocabulary& vocab,
                 nlohmann::json extra) {
  const std::int64_t window = windows.empty() ? 0 : static_cast<std::int64_t>(windows.front().ids.size());
  std::vector<std::int32_t> flat;
  flat.reserve(windows.size() * static_cast<std::size_t>(window));
  std::int64_t real = 0;
  for (const auto& w : windows) {
    if (static_cast<std::int64_t>(w.ids.size()) != window) throw std::invalid_argument("shard windows differ in length");
    flat.insert(flat.end(), w.ids.begin(), w.ids.end());
    real += std::accumulate(w.mask.begin(), w.mask.end(), std::int64_t{0});
  }
  nlohmann::json header = extra.is_null() ? nlohmann::json::object() : std::move(extra);
  header["format"] = "zebra-shard-1";
  header["window"] = window;
  header["vocab"] = vocab.size();
  header["count"] = windows.size();
  header["tokens"] = real;
  write_token_file(path, header, flat);
}

std::vector<PackedWindow> read_shard(const std::filesystem::path& path, const Vocabulary& vocab) {
  auto [header, ids] = read_token_file(path);
  if (header.value("format", "") != "zebra-shard-1") throw num::IoError(path.string() + ": not a shard");
  if (header.at("vocab").get<std::int32_t>() != vocab.size()) {
    throw num::IoError(path.string() + ": vocabulary " + header["vocab"].dump() + " differs from " +
                       std::to_string(vocab.size()));
  }
  const auto window = header.at("window").get<std::size_t>();
  const auto count = header.at("count").get<std::size_t>();
  if (ids.size() != window * count) throw num::IoError(path.string() + ": payload size mismatch");
  std::vector<PackedWindow> out(count);
  for (std::size_t w = 0; w < count; ++w) {
    out[w].ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(w * window),
                      ids.begin() + static_cast<std::ptrdiff_t>((w + 1) * window));
    out[w].mask.resize(window);
    for (std::size_t i = 0; i < window; ++i) out[w].mask[i] = out[w].ids[i] != vocab.pad();
  }
  return out;
}

}  // namespace zebra::seq
