// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>

#include "zebra/app/config.hpp"
#include "zebra/eval/experiments.hpp"
#include "zebra/infer/engine.hpp"
#include "zebra/lm/train.hpp"
#include "zebra/vq/train.hpp"

namespace zebra::app {

namespace fs = std::filesystem;

/// Writes `dir/config.json` (the resolved config, loadable with --config)
/// and `dir/run.json` (command and input paths).
void write_run_record(const fs::path& dir, const RunConfig& config, const std::string& command,
                      const nlohmann::json& inputs = nlohmann::json::object());

/// `dir/checkpoint` when present, else `dir`.
fs::path checkpoint_dir(const fs::path& dir);

void gen_data(const RunConfig& config, const fs::path& out);

vq::VqTrainResult train_tokenizer(const RunConfig& config, const fs::path& data_dir, const fs::path& out);

/// Tokenizes both splits (cached as train_tokens.bin / test_tokens.bin in
/// `out`), draws validation windows from the test environments and trains.
lm::LmTrainResult train_transformer(const RunConfig& config, const fs::path& data_dir, const fs::path& vq_dir,
                                    const fs::path& out);

/// Loaded dataset, engine and tokenized test split. Not movable: the test
/// set points into the dataset.
struct EvalContext {
  EvalContext(const fs::path& data_dir, const fs::path& vq_dir, const fs::path& lm_dir, int threads);
  EvalContext(const EvalContext&) = delete;
  EvalContext& operator=(const EvalContext&) = delete;

  pde::Dataset data;
  infer::Engine engine;
  eval::TestSet test;
  int threads = 1;

  eval::EvalSettings settings(const RunConfig& config) const;
};

/// Rollouts of the configured prompt on test environments. Writes
/// predictions.bin (f32 [env, sample, time, 1, space...] in physical units),
/// pred_meta.json, errors.csv and rollout.png.
nlohmann::json run_infer(const RunConfig& config, const EvalContext& ctx, const fs::path& out);

struct EvalReport {
  eval::ShotComparison shots;
  eval::ContextSweep sweep;
};

/// Zero-shot vs one-shot comparison and the context-size sweep.
EvalReport run_eval(const RunConfig& config, const EvalContext& ctx, const fs::path& out);

eval::UqExperiment run_uq(const RunConfig& config, const EvalContext& ctx, const fs::path& out);

eval::GenerativeAnalysis run_analyze_gen(const RunConfig& config, const EvalContext& ctx, const fs::path& out);

}  // namespace zebra::app
