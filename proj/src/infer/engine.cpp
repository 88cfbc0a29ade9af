// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/infer/engine.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "zebra/lm/generate.hpp"

namespace zebra::infer {

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::temporal: return "temporal";
    case Mode::adaptive: return "adaptive";
    case Mode::adaptive_temporal: return "adaptive+temporal";
    case Mode::generative: return "generative";
  }
  return "?";
}

Mode parse_mode(std::string_view name) {
  for (Mode m : {Mode::temporal, Mode::adaptive, Mode::adaptive_temporal, Mode::generative})
    if (mode_name(m) == name) return m;
  if (name == "adaptive_temporal") return Mode::adaptive_temporal;
  throw std::invalid_argument("unknown mode '" + std::string(name) +
                              "' (temporal, adaptive, adaptive+temporal, generative)");
}

PromptOverflow::PromptOverflow(std::int64_t required, std::int64_t available)
    : std::length_error("prompt and generation need " + std::to_string(required) + " tokens but max_context is " +
                        std::to_string(available)),
      required_(required),
      available_(available) {}

void PromptSpec::validate(std::size_t n_context) const {
  if (temperature < 0) throw std::invalid_argument("temperature must be >= 0");
  if (samples < 1) throw std::invalid_argument("samples must be >= 1");
  if (target_frames < 1) throw std::invalid_argument("target_frames must be >= 1");
  if (n_context > static_cast<std::size_t>(seq::kMaxContext)) throw std::invalid_argument("at most 6 context trajectories");
  switch (mode) {
    case Mode::temporal:
      if (n_context != 0) throw std::invalid_argument("temporal mode takes no context trajectories");
      if (observed < 1) throw std::invalid_argument("temporal mode needs at least one observed frame");
      break;
    case Mode::adaptive:
      if (n_context == 0) throw std::invalid_argument("adaptive mode needs a context trajectory");
      if (observed != 1) throw std::invalid_argument("adaptive mode observes exactly the initial condition");
      break;
    case Mode::adaptive_temporal:
      if (n_context == 0) throw std::invalid_argument("adaptive mode needs a context trajectory");
      if (observed < 1) throw std::invalid_argument("adaptive+temporal mode needs at least one observed frame");
      break;
    case Mode::generative:
      if (n_context == 0) throw std::invalid_argument("generative mode needs a context trajectory");
      break;
  }
}

nlohmann::json PromptSpec::to_json() const {
  return {{"mode", mode_name(mode)}, {"observed", observed}, {"target_frames", target_frames},
          {"temperature", temperature}, {"samples", samples}, {"seed", seed}};
}

std::vector<std::int32_t> build_prompt(const PromptSpec& spec, const std::vector<std::span<const std::int32_t>>& context,
                                       std::span<const std::int32_t> observed, std::int64_t tokens_per_frame,
                                       const seq::Vocabulary& vocab) {
  spec.validate(context.size());
  auto check_content = [&](std::span<const std::int32_t> ids, const char* what) {
    if (ids.empty() || static_cast<std::int64_t>(ids.size()) % tokens_per_frame != 0) {
      throw std::invalid_argument(std::string(what) + " is not a whole number of frames");
    }
    for (auto id : ids)
      if (!vocab.is_content(id)) throw std::invalid_argument(std::string(what) + " holds a non-content id");
  };
  std::vector<std::int32_t> ids = {vocab.bos()};
  for (const auto& c : context) {
    check_content(c, "context trajectory");
    ids.push_back(vocab.bot());
    ids.insert(ids.end(), c.begin(), c.end());
    ids.push_back(vocab.eot());
  }
  ids.push_back(vocab.bot());
  if (spec.mode != Mode::generative) {
    check_content(observed, "observed frames");
    if (static_cast<std::int64_t>(observed.size()) != spec.observed * tokens_per_frame) {
      throw std::invalid_argument("observed frames do not match spec.observed");
    }
    ids.insert(ids.end(), observed.begin(), observed.end());
  }
  return ids;
}

void check_budget(std::int64_t prompt_len, std::int64_t generated, std::int64_t max_context) {
  if (prompt_len + generated > max_context) throw PromptOverflow(prompt_len + generated, max_context);
}

Engine::Engine(std::shared_ptr<const vq::Tokenizer> tokenizer, std::shared_ptr<const lm::LmModel> model)
    : tokenizer_(std::move(tokenizer)), model_(std::move(model)) {
  if (tokenizer_->codebook_size() != model_->config().content_vocab) {
    throw std::invalid_argument("transformer vocabulary does not match the tokenizer codebook");
  }
}

Engine Engine::load(const std::filesystem::path& vq_checkpoint, const std::filesystem::path& lm_checkpoint) {
  return Engine(std::make_shared<vq::Tokenizer>(vq::Tokenizer::load(vq_checkpoint)),
                std::make_shared<lm::LmModel>(lm::LmModel::load(lm_checkpoint)));
}

Rollout Engine::rollout(const PromptSpec& spec, const std::vector<std::span<const std::int32_t>>& context,
                        std::span<const std::int32_t> observed, int threads) const {
  Rollout out;
  out.prompt = build_prompt(spec, context, observed, tokens_per_frame(), vocab());
  const std::int64_t count = spec.target_frames * tokens_per_frame();
  check_budget(static_cast<std::int64_t>(out.prompt.size()), count, model_->config().max_context);
  lm::SampleOptions opt;
  opt.temperature = spec.temperature;
  opt.forbid_specials = true;
  out.tokens = lm::generate_samples(*model_, out.prompt, count, opt, spec.seed, spec.samples, threads);
  for (const auto& t : out.tokens) out.frames.push_back(tokenizer_->detokenize(t));
  return out;
}

Rollout Engine::rollout_physical(const PromptSpec& spec, const std::vector<std::span<const float>>& context,
                                 std::span<const float> observed, int threads) const {
  std::vector<std::vector<std::int32_t>> ctx_ids;
  for (const auto& c : context) ctx_ids.push_back(tokenizer_->tokenize(c));
  std::vector<std::span<const std::int32_t>> spans(ctx_ids.begin(), ctx_ids.end());
  std::vector<std::int32_t> obs;
  if (!observed.empty()) obs = tokenizer_->tokenize(observed);
  return rollout(spec, spans, obs, threads);
}

Rollout Engine::sample_new_trajectories(std::span<const std::int32_t> context, std::int64_t frames, int samples,
                                        double temperature, std::uint64_t seed, int threads) const {
  PromptSpec spec;
  spec.mode = Mode::generative;
  spec.observed = 0;
  spec.target_frames = frames;
  spec.temperature = temperature;
  spec.samples = samples;
  spec.seed = seed;
  return rollout(spec, {context}, {}, threads);
}

std::vector<seq::TokenTrajectory> tokenize_split(const vq::Tokenizer& tokenizer, const pde::Dataset& data,
                                                 const pde::Split& split, int threads,
                                                 const TrajectoryTransform& transform) {
  std::vector<seq::TokenTrajectory> pool;
  for (auto e : split.envs)
    for (auto j = split.traj_begin; j < split.traj_end; ++j) pool.push_back({e, j, {}});
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    try {
      for (std::size_t i = next++; i < pool.size(); i = next++) {
        auto values = data.trajectory(pool[i].env, pool[i].traj);
        if (transform) transform(pool[i].env, pool[i].traj, values);
        pool[i].tokens = tokenizer.tokenize(values);
      }
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  };
  std::vector<std::thread> workers;
  for (int i = 1; i < threads; ++i) workers.emplace_back(worker);
  worker();
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
  return pool;
}

void write_token_pool(const std::filesystem::path& path, const std::vector<seq::TokenTrajectory>& pool,
                      std::int64_t tokens_per_frame, const nlohmann::json& extra) {
  nlohmann::json header = extra.is_null() ? nlohmann::json::object() : extra;
  header["format"] = "zebra-token-pool-1";
  header["tokens_per_frame"] = tokens_per_frame;
  nlohmann::json entries = nlohmann::json::array();
  std::vector<std::int32_t> ids;
  for (const auto& t : pool) {
    entries.push_back({t.env, t.traj, static_cast<std::int64_t>(t.tokens.size())});
    ids.insert(ids.end(), t.tokens.begin(), t.tokens.end());
  }
  header["trajectories"] = entries;
  seq::write_token_file(path, header, ids);
}

std::vector<seq::TokenTrajectory> read_token_pool(const std::filesystem::path& path, nlohmann::json* header) {
  auto [h, ids] = seq::read_token_file(path);
  if (h.value("format", "") != "zebra-token-pool-1") throw std::runtime_error(path.string() + ": not a token pool");
  std::vector<seq::TokenTrajectory> pool;
  std::size_t pos = 0;
  for (const auto& e : h.at("trajectories")) {
    const auto n = e.at(2).get<std::size_t>();
    if (pos + n > ids.size()) throw std::runtime_error(path.string() + ": truncated token pool");
    pool.push_back({e.at(0).get<std::int64_t>(), e.at(1).get<std::int64_t>(),
                    std::vector<std::int32_t>(ids.begin() + static_cast<std::ptrdiff_t>(pos),
                                              ids.begin() + static_cast<std::ptrdiff_t>(pos + n))});
    pos += n;
  }
  if (header) *header = std::move(h);
  return pool;
}

}  // namespace zebra::infer
