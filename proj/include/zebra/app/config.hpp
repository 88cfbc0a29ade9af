// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "zebra/infer/engine.hpp"
#include "zebra/lm/train.hpp"
#include "zebra/pde/environment.hpp"
#include "zebra/vq/train.hpp"

namespace zebra::app {

/// Invalid configuration. `key()` is the dotted path of the first offending
/// key, empty for syntax errors.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::string key = {}) : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct ContextConfig {
  int n_max = 6;
  std::int64_t m = 9;
  std::int64_t val_windows = 64;
};

struct InferConfig {
  infer::Mode mode = infer::Mode::adaptive;
  int observed = 1;
  int n_context = 1;
  std::int64_t target_frames = 8;
  double temperature = 0.1;
  int samples = 1;
  /// Test environment and trajectory to predict; -1 means every test env
  /// with the first stored trajectory as the target.
  std::int64_t env = -1;
  std::int64_t traj = -1;
};

struct EvalConfig {
  std::int64_t window = 9;
  double temperature = 0.1;
  std::vector<int> context_sizes{1, 2, 3, 4, 5, 6};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<double> uq_temperatures{0.1, 0.25, 0.5, 0.75, 1.0};
  int uq_samples = 10;
  int gen_samples = 10;
  double gen_temperature = 1.0;
};

struct RunConfig {
  pde::Family family = pde::Family::advection;
  std::string profile = "desk";
  std::uint64_t seed = 0;
  int threads = 0;  // 0: hardware concurrency
  pde::DatasetProfile dataset;
  vq::VqConfig vq;
  vq::VqTrainConfig vq_train;
  lm::LmConfig lm;
  lm::LmTrainConfig lm_train;
  ContextConfig context;
  InferConfig infer;
  EvalConfig eval;

  int resolved_threads() const;
  nlohmann::json to_json() const;
};

/// Largest example count n with <bos> n(m * tpf + 2) <eos> inside the context.
int max_examples(std::int64_t max_context, std::int64_t m, std::int64_t tokens_per_frame);

/// Defaults for one family and profile ("paper", "desk" or "tiny").
RunConfig default_config(pde::Family family, const std::string& profile);

/// Parses config text; blank text is {}. Syntax errors are reported as
/// "<source>:<line>:<column>: <message>".
nlohmann::json parse_config_text(const std::string& text, const std::string& source = "config");
nlohmann::json read_config_file(const std::filesystem::path& path);

/// Layers file over family defaults and overrides over the file. The family
/// and profile are taken from overrides, then the file, then advection/desk.
/// Unknown keys and type mismatches throw ConfigError naming the key path.
RunConfig resolve_config(const nlohmann::json& file, const nlohmann::json& overrides = nlohmann::json::object());

/// Sets a dotted key in `overrides`; the value is parsed as JSON when it is
/// valid JSON and taken as a string otherwise.
void set_override(nlohmann::json& overrides, const std::string& dotted_key, const std::string& value);

}  // namespace zebra::app
