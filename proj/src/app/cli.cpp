// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/app/cli.hpp"

#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>

#include "zebra/app/config.hpp"
#include "zebra/app/pipeline.hpp"
#include "zebra/app/selftest.hpp"
#include "zebra/num/checkpoint.hpp"

namespace zebra::app {

namespace {

using nlohmann::json;

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::string> family, profile;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string log_level = "info";
  std::string data, vq, lm, out;
};

void add_common(CLI::App* cmd, Common& c, bool data, bool vq, bool lm) {
  cmd->add_option("-c,--config", c.config_path, "JSON config file (blank file = defaults)");
  cmd->add_option("--set", c.sets, "Override a config key, e.g. --set lm_train.lr=3e-4")->type_name("KEY=VALUE");
  cmd->add_option("--family", c.family, "PDE family (advection, heat, burgers, wave_b, combined, wave2d, vorticity2d)");
  cmd->add_option("--profile", c.profile, "Scale profile: paper, desk or tiny");
  cmd->add_option("--seed", c.seed, "Global seed");
  cmd->add_option("--threads", c.threads, "Worker threads (0 = all cores, 1 = bitwise deterministic)");
  cmd->add_option("--log-level", c.log_level, "trace, debug, info, warn, error")->capture_default_str();
  if (data) cmd->add_option("--data", c.data, "Dataset directory");
  if (vq) cmd->add_option("--vq", c.vq, "Tokenizer run directory (or its checkpoint)");
  if (lm) cmd->add_option("--lm", c.lm, "Transformer run directory (or its checkpoint)");
  cmd->add_option("-o,--out", c.out, "Output directory");
}

fs::path data_root() {
  const char* env = std::getenv("ZEBRA_DATA_DIR");
  return env && *env ? fs::path(env) : fs::path(".");
}

std::string run_tag(const json& file, const json& overrides) {
  auto get = [&](const char* key, const char* fallback) {
    if (overrides.contains(key)) return overrides[key].get<std::string>();
    if (file.contains(key) && file[key].is_string()) return file[key].get<std::string>();
    return std::string(fallback);
  };
  return get("family", "advection") + "-" + get("profile", "desk");
}

// Config recorded by the most downstream upstream artifact.
json upstream_config(const Common& c) {
  auto from_ckpt = [](const std::string& dir) -> json {
    if (dir.empty()) return nullptr;
    const auto meta = checkpoint_dir(dir) / "meta.json";
    if (!fs::exists(meta)) return nullptr;
    const auto j = num::read_json(meta);
    return j.contains("run_config") ? j["run_config"] : json(nullptr);
  };
  if (auto j = from_ckpt(c.lm); !j.is_null()) return j;
  if (auto j = from_ckpt(c.vq); !j.is_null()) return j;
  if (!c.data.empty() && fs::exists(fs::path(c.data) / "meta.json")) {
    const auto meta = num::read_json(fs::path(c.data) / "meta.json");
    if (meta.contains("config")) return meta["config"];
    return {{"family", meta.at("family")}, {"profile", meta.at("profile").at("name")}, {"dataset", meta.at("profile")}};
  }
  return nullptr;
}

class RunLog {
 public:
  RunLog(const std::string& level) {
    console_ = std::make_shared<spdlog::sinks::stderr_color_sink_mt>();
    console_->set_level(spdlog::level::from_str(level));
    previous_ = spdlog::default_logger();
    install();
  }
  ~RunLog() { spdlog::set_default_logger(previous_); }

  void to_file(const fs::path& dir) {
    fs::create_directories(dir);
    file_ = std::make_shared<spdlog::sinks::basic_file_sink_mt>((dir / "run.log").string(), true);
    file_->set_level(spdlog::level::debug);
    install();
  }

 private:
  void install() {
    std::vector<spdlog::sink_ptr> sinks{console_};
    if (file_) sinks.push_back(file_);
    auto logger = std::make_shared<spdlog::logger>("zebra", sinks.begin(), sinks.end());
    logger->set_level(spdlog::level::debug);
    spdlog::set_default_logger(logger);
  }
  spdlog::sink_ptr console_, file_;
  std::shared_ptr<spdlog::logger> previous_;
};

void echo_config(const RunConfig& config) {
  const auto flat = config.to_json().flatten();
  for (const auto& [key, value] : flat.items()) spdlog::debug("config {} = {}", key, value.dump());
}

int run_selftest(const std::vector<std::string>& only) {
  bool all = true;
  for (const auto& g : selftest_groups()) {
    if (!only.empty() && std::find(only.begin(), only.end(), g.name) == only.end()) continue;
    const auto r = g.run();
    const auto* w = r.worst();
    std::printf("%s %-16s %3zu checks  %.1fs", r.passed() ? "PASS" : "FAIL", g.name.c_str(), r.checks.size(), r.seconds);
    if (w && w->bound > 0) std::printf("  worst: %s = %.3g (bound %.3g)", w->name.c_str(), w->value, w->bound);
    std::printf("\n");
    for (const auto& c : r.checks)
      if (!c.passed)
        std::printf("    failed: %s value %.6g bound %.3g %s\n", c.name.c_str(), c.value, c.bound, c.detail.c_str());
    all = all && r.passed();
  }
  std::fflush(stdout);
  return all ? kOk : kFailure;
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"zebra: generative in-context modelling of PDE dynamics on discrete tokens"};
  app.name("zebra");
  app.require_subcommand(1, 1);

  Common c;
  // Stage-specific overrides, applied as dotted config keys.
  std::vector<std::pair<std::string, std::string>> flag_sets;
  auto bind = [&](CLI::App* cmd, const std::string& flag, const std::string& key, const std::string& help) {
    cmd->add_option_function<std::string>(flag, [&flag_sets, key](const std::string& v) { flag_sets.emplace_back(key, v); },
                                          help);
  };

  auto* gen = app.add_subcommand("gen-data", "Generate a PDE dataset");
  add_common(gen, c, false, false, false);

  auto* tvq = app.add_subcommand("train-vqvae", "Train the VQ-VAE tokenizer");
  add_common(tvq, c, true, false, false);
  bind(tvq, "--epochs", "vq_train.epochs", "Training epochs");
  bind(tvq, "--lr", "vq_train.lr", "Peak learning rate");

  auto* tlm = app.add_subcommand("train-lm", "Train the transformer on tokenized trajectories");
  add_common(tlm, c, true, true, false);
  bind(tlm, "--epochs", "lm_train.epochs", "Training epochs");
  bind(tlm, "--lr", "lm_train.lr", "Peak learning rate");

  auto* inf = app.add_subcommand("infer", "Roll out predictions for test environments");
  add_common(inf, c, true, true, true);
  bind(inf, "--mode", "infer.mode", "temporal, adaptive, adaptive+temporal or generative");
  bind(inf, "--observed", "infer.observed", "Observed target frames in the prompt");
  bind(inf, "--n-context", "infer.n_context", "Example trajectories in the prompt");
  bind(inf, "--frames", "infer.target_frames", "Frames to generate");
  bind(inf, "--temperature", "infer.temperature", "Sampling temperature (0 = greedy)");
  bind(inf, "--samples", "infer.samples", "Samples per prompt");
  bind(inf, "--env", "infer.env", "Test environment (-1 = all)");
  bind(inf, "--traj", "infer.traj", "Target trajectory (-1 = first stored)");

  auto* ev = app.add_subcommand("eval", "Zero-shot vs one-shot comparison and context-size sweep");
  add_common(ev, c, true, true, true);
  bind(ev, "--temperature", "eval.temperature", "Sampling temperature");
  bind(ev, "--window", "eval.window", "Frames per evaluated trajectory");

  auto* uq = app.add_subcommand("uq", "Uncertainty statistics across temperatures");
  add_common(uq, c, true, true, true);
  bind(uq, "--samples", "eval.uq_samples", "Samples per prompt");
  bind(uq, "--temperatures", "eval.uq_temperatures", "JSON list, e.g. [0.1,1.0]");

  auto* gena = app.add_subcommand("analyze-gen", "Free generation: fidelity, diversity and PCA");
  add_common(gena, c, true, true, true);
  bind(gena, "--samples", "eval.gen_samples", "Generated trajectories per environment");
  bind(gena, "--temperature", "eval.gen_temperature", "Sampling temperature");

  auto* self = app.add_subcommand("selftest", "Run the oracle checks");
  std::vector<std::string> groups;
  self->add_option("--group", groups, "Only these groups (gradients, solvers, round-trips, token-arithmetic, transformer)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << "\n" << app.help();
    return kUsage;
  }

  if (self->parsed()) return run_selftest(groups);

  CLI::App* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  if (spdlog::level::from_str(c.log_level) == spdlog::level::off && c.log_level != "off") {
    std::cerr << "unknown log level '" << c.log_level << "'\n";
    return kUsage;
  }
  RunLog log(c.log_level);

  RunConfig config;
  fs::path out;
  try {
    json overrides = json::object();
    if (c.family) overrides["family"] = *c.family;
    if (c.profile) overrides["profile"] = *c.profile;
    if (c.seed) overrides["seed"] = *c.seed;
    if (c.threads) overrides["threads"] = *c.threads;
    for (const auto& s : c.sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects KEY=VALUE, got '" + s + "'");
      set_override(overrides, s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& [key, value] : flag_sets) set_override(overrides, key, value);

    json file = c.config_path.empty() ? json::object() : read_config_file(c.config_path);
    const auto root = data_root();
    const auto tag = run_tag(file, overrides);
    if (name != "gen-data" && c.data.empty()) c.data = (root / "data" / tag).string();
    if ((name == "train-lm" || name == "infer" || name == "eval" || name == "uq" || name == "analyze-gen") && c.vq.empty())
      c.vq = (root / "runs" / tag / "vq").string();
    if ((name == "infer" || name == "eval" || name == "uq" || name == "analyze-gen") && c.lm.empty())
      c.lm = (root / "runs" / tag / "lm").string();
    if (c.out.empty()) {
      if (name == "gen-data") out = root / "data" / tag;
      else if (name == "train-vqvae") out = root / "runs" / tag / "vq";
      else if (name == "train-lm") out = root / "runs" / tag / "lm";
      else out = root / "runs" / tag / name;
    } else {
      out = c.out;
    }

    if (name != "gen-data") {
      if (!file.is_object()) throw ConfigError("config root must be an object");
      json layered = upstream_config(c);
      if (layered.is_object()) {
        for (const char* k : {"threads"}) layered.erase(k);
        layered.merge_patch(file);
        file = layered;
      }
    }
    config = resolve_config(file, overrides);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }

  try {
    log.to_file(out);
    spdlog::info("{}: family {} profile {} seed {} threads {} -> {}", name, pde::family_name(config.family),
                 config.profile, config.seed, config.resolved_threads(), out.string());
    echo_config(config);
    json inputs = {{"data", c.data}, {"vq", c.vq}, {"lm", c.lm}};
    write_run_record(out, config, name, inputs);

    if (name == "gen-data") {
      gen_data(config, out);
      spdlog::info("dataset written to {}", out.string());
    } else if (name == "train-vqvae") {
      const auto r = train_tokenizer(config, c.data, out);
      spdlog::info("tokenizer: val recon {:.4f}, usage {:.3f}, {:.0f}s", r.val_recon, r.usage, r.seconds);
    } else if (name == "train-lm") {
      const auto r = train_transformer(config, c.data, c.vq, out);
      spdlog::info("transformer: val loss {:.4f}, {:.0f}s", r.val_loss, r.seconds);
    } else {
      EvalContext ctx(c.data, c.vq, c.lm, config.resolved_threads());
      if (ctx.data.family() != config.family)
        throw std::invalid_argument("dataset family " + pde::family_name(ctx.data.family()) +
                                    " does not match config family " + pde::family_name(config.family));
      if (name == "infer") {
        const auto meta = run_infer(config, ctx, out);
        spdlog::info("predictions written to {} (mean rel L2 {})", (out / "predictions.bin").string(),
                     meta["mean_rel_l2"].dump());
      } else if (name == "eval") {
        const auto r = run_eval(config, ctx, out);
        spdlog::info("one-shot {:.4f} vs zero-shot {:.4f}, win rate {:.2f}", r.shots.mean_adaptive, r.shots.mean_temporal,
                     r.shots.win_rate);
        for (int n : config.eval.context_sizes)
          spdlog::info("n = {}: mean rel L2 {:.4f}", n, r.sweep.mean_by_n.at(static_cast<std::size_t>(n - 1)));
      } else if (name == "uq") {
        const auto r = run_uq(config, ctx, out);
        for (std::size_t i = 0; i < r.temperatures.size(); ++i)
          spdlog::info("tau {:.2f}: relative std {:.4f}, confidence {:.4f}", r.temperatures[i], r.mean_relative_std[i],
                       r.mean_confidence[i]);
      } else if (name == "analyze-gen") {
        const auto r = run_analyze_gen(config, ctx, out);
        spdlog::info("fidelity {:.4f}, diversity {:.4f} (unnormalized {:.4f}), finite {:.2f}", r.fidelity, r.diversity,
                     r.diversity_l2, r.finite_fraction);
      }
    }
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kFailure;
  }
  spdlog::default_logger()->flush();
  return kOk;
}

int dispatch(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data());
}

}  // namespace zebra::app
