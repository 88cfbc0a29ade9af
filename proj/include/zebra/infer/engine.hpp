// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <nlohmann/json.hpp>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "zebra/lm/model.hpp"
#include "zebra/pde/dataset.hpp"
#include "zebra/seq/sequence.hpp"
#include "zebra/vq/tokenizer.hpp"

namespace zebra::infer {

enum class Mode { temporal, adaptive, adaptive_temporal, generative };

std::string mode_name(Mode m);
Mode parse_mode(std::string_view name);

class PromptOverflow : public std::length_error {
 public:
  PromptOverflow(std::int64_t required, std::int64_t available);
  std::int64_t required() const { return required_; }
  std::int64_t available() const { return available_; }

 private:
  std::int64_t required_;
  std::int64_t available_;
};

struct PromptSpec {
  Mode mode = Mode::adaptive;
  /// Observed target frames placed after the final <bot>; the initial
  /// condition counts as one. Ignored in generative mode.
  int observed = 1;
  /// Frames to generate after the prompt.
  std::int64_t target_frames = 8;
  double temperature = 0.1;
  int samples = 1;
  std::uint64_t seed = 0;

  /// Checks mode-specific constraints for `n_context` example trajectories.
  void validate(std::size_t n_context) const;
  nlohmann::json to_json() const;
};

/// Prompt ids for `spec`:
///   temporal           <bos><bot>[observed]
///   adaptive(+temporal) <bos><bot>[c1]<eot>...<bot>[cn]<eot><bot>[observed]
///   generative         <bos><bot>[c1]<eot>...<bot>[cn]<eot><bot>
/// `context` entries hold whole frames of content ids; `observed` holds
/// spec.observed frames.
std::vector<std::int32_t> build_prompt(const PromptSpec& spec, const std::vector<std::span<const std::int32_t>>& context,
                                       std::span<const std::int32_t> observed, std::int64_t tokens_per_frame,
                                       const seq::Vocabulary& vocab);

/// Throws PromptOverflow when prompt + generated exceeds max_context.
void check_budget(std::int64_t prompt_len, std::int64_t generated, std::int64_t max_context);

struct Rollout {
  std::vector<std::int32_t> prompt;
  /// Per sample: target_frames * tokens_per_frame content ids.
  std::vector<std::vector<std::int32_t>> tokens;
  /// Per sample: decoded frames in physical units.
  std::vector<std::vector<float>> frames;
};

/// A tokenizer and a transformer trained on its codes.
class Engine {
 public:
  Engine(std::shared_ptr<const vq::Tokenizer> tokenizer, std::shared_ptr<const lm::LmModel> model);
  static Engine load(const std::filesystem::path& vq_checkpoint, const std::filesystem::path& lm_checkpoint);

  const vq::Tokenizer& tokenizer() const { return *tokenizer_; }
  const lm::LmModel& model() const { return *model_; }
  std::int64_t tokens_per_frame() const { return tokenizer_->tokens_per_frame(); }
  std::int64_t frame_size() const { return tokenizer_->frame_size(); }
  seq::Vocabulary vocab() const { return {model_->config().content_vocab}; }

  /// Generates spec.samples continuations of exactly target_frames frames
  /// with specials masked, then detokenizes them.
  Rollout rollout(const PromptSpec& spec, const std::vector<std::span<const std::int32_t>>& context,
                  std::span<const std::int32_t> observed, int threads = 1) const;

  /// Physical-space convenience: tokenizes the inputs first. `context`
  /// trajectories and `observed` are whole frames laid end to end.
  Rollout rollout_physical(const PromptSpec& spec, const std::vector<std::span<const float>>& context,
                           std::span<const float> observed, int threads = 1) const;

  /// Free generation of `samples` trajectories of `frames` frames each,
  /// initial condition included, conditioned on one example trajectory.
  Rollout sample_new_trajectories(std::span<const std::int32_t> context, std::int64_t frames, int samples,
                                  double temperature, std::uint64_t seed, int threads = 1) const;

 private:
  std::shared_ptr<const vq::Tokenizer> tokenizer_;
  std::shared_ptr<const lm::LmModel> model_;
};

/// Called on the physical values of each trajectory before tokenization.
/// Must be safe to call concurrently for different trajectories.
using TrajectoryTransform = std::function<void(std::int64_t env, std::int64_t traj, std::vector<float>& values)>;

/// Tokens of every trajectory in `split` (all stored frames).
std::vector<seq::TokenTrajectory> tokenize_split(const vq::Tokenizer& tokenizer, const pde::Dataset& data,
                                                 const pde::Split& split, int threads = 1,
                                                 const TrajectoryTransform& transform = {});

/// Writes a token pool (concatenated trajectories) with its layout header.
void write_token_pool(const std::filesystem::path& path, const std::vector<seq::TokenTrajectory>& pool,
                      std::int64_t tokens_per_frame, const nlohmann::json& extra = {});
std::vector<seq::TokenTrajectory> read_token_pool(const std::filesystem::path& path, nlohmann::json* header = nullptr);

}  // namespace zebra::infer
