// Acceptance run: one PASS/FAIL line per criterion. Criteria 6-11 share a
// desk Advection pipeline cached under --cache; a stage reruns when its
// done.json is missing or the cached config differs from the current one.

#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "zebra/app/config.hpp"
#include "zebra/app/pipeline.hpp"
#include "zebra/app/selftest.hpp"
#include "zebra/eval/metrics.hpp"
#include "zebra/infer/engine.hpp"
#include "zebra/lm/train.hpp"
#include "zebra/num/checkpoint.hpp"
#include "zebra/num/rng.hpp"

using namespace zebra;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kGradientSeconds = 60;
constexpr double kSolverSeconds = 120;
constexpr double kRoundTripSeconds = 60;
constexpr double kVqRecon = 0.05;
constexpr double kVqUsage = 0.5;
constexpr int kVqMaxEpochs = 200;
constexpr double kVqSeconds = 30 * 60;
constexpr double kOverfitLoss = 0.01;
constexpr int kOverfitSteps = 2000;
constexpr double kOverfitLr = 1e-3;
constexpr double kLmSeconds = 60 * 60;
constexpr double kWinRate = 0.7;
constexpr int kSweepEnvs = 8;
constexpr int kSweepSeeds = 3;
constexpr int kUqSamples = 10;
constexpr double kGaussianCoverage = 0.9973;
constexpr double kGaussianTolerance = 0.002;
constexpr double kFiniteFraction = 0.9;

struct Outcome {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
};

std::string printf_string(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome from_group(int id, const app::CheckGroup& g, double max_seconds) {
  Outcome o{id, g.name, g.passed(), ""};
  int failed = 0;
  for (const auto& c : g.checks) failed += !c.passed;
  o.detail = printf_string("%zu checks, %d failed, %.1fs", g.checks.size(), failed, g.seconds);
  if (const auto* w = g.worst()) o.detail += printf_string("; worst %s = %.3g (bound %.3g)", w->name.c_str(), w->value, w->bound);
  for (const auto& c : g.checks)
    if (!c.passed) o.detail += "; FAILED " + c.name + (c.detail.empty() ? "" : " (" + c.detail + ")");
  if (max_seconds > 0) {
    o.passed = o.passed && g.seconds < max_seconds;
    o.detail += printf_string("; runtime bound %.0fs", max_seconds);
  }
  return o;
}

/// Runs `stage` unless dir/done.json exists, and returns the stored result.
json cached(const fs::path& dir, const std::string& label, const std::function<json()>& stage) {
  const auto done = dir / "done.json";
  if (fs::exists(done)) {
    spdlog::info("{}: cached", label);
    return num::read_json(done);
  }
  fs::remove_all(dir);
  fs::create_directories(dir);
  spdlog::info("{}: running", label);
  const auto t0 = std::chrono::steady_clock::now();
  auto result = stage();
  result["wall_seconds"] = seconds_since(t0);
  num::write_json(done, result);
  return result;
}

/// Monte-Carlo check of uq_stats: samples and truth are independent draws
/// of mean + sigma * N(0, 1), so the truth falls within 3 std of the sample
/// mean with probability 0.9973 as S grows.
double gaussian_coverage() {
  const std::int64_t points = 3000;
  const int S = 10000;
  const double sigma = 0.3;
  num::Rng rng(num::hash_seed({2026, num::hash_string("gaussian coverage")}));
  std::vector<float> mean(points), truth(points);
  for (auto& m : mean) m = static_cast<float>(rng.normal());
  for (std::int64_t i = 0; i < points; ++i) truth[i] = static_cast<float>(mean[i] + sigma * rng.normal());
  std::vector<std::vector<float>> samples(S, std::vector<float>(points));
  for (auto& s : samples)
    for (std::int64_t i = 0; i < points; ++i) s[i] = static_cast<float>(mean[i] + sigma * rng.normal());
  std::vector<std::span<const float>> views(samples.begin(), samples.end());
  return eval::uq_stats(views, truth).confidence_level;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"zebra acceptance run"};
  std::string cache = "acceptance_cache";
  std::vector<int> only;
  bool fresh = false;
  cli.add_option("--cache", cache, "Directory for the cached desk pipeline");
  cli.add_option("--only", only, "Criteria to run (default: all)");
  cli.add_flag("--fresh", fresh, "Discard the cache first");
  CLI11_PARSE(cli, argc, argv);
  spdlog::set_pattern("[%H:%M:%S] %v");

  const std::set<int> wanted(only.begin(), only.end());
  auto want = [&](int id) { return wanted.empty() || wanted.count(id) > 0; };
  std::vector<Outcome> outcomes;
  auto report = [&](Outcome o) {
    std::printf("criterion %2d  %s  %s: %s\n", o.id, o.passed ? "PASS" : "FAIL", o.name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    outcomes.push_back(std::move(o));
  };

  if (want(1)) report(from_group(1, app::gradient_oracles(), kGradientSeconds));
  if (want(2)) report(from_group(2, app::solver_oracles(), kSolverSeconds));
  if (want(3)) report(from_group(3, app::round_trip_oracles(), kRoundTripSeconds));
  if (want(4)) report(from_group(4, app::token_arithmetic(), 0));
  if (want(5)) report(from_group(5, app::transformer_invariants(), 0));

  bool desk = false;
  for (int id = 6; id <= 11; ++id) desk = desk || want(id);
  if (desk) {
    const fs::path root = cache;
    const auto config = app::resolve_config({{"family", "advection"}, {"profile", "desk"}, {"seed", 0}});
    const json config_json = config.to_json();
    if (fresh) fs::remove_all(root);
    if (fs::exists(root / "config.json") && num::read_json(root / "config.json") != config_json) {
      spdlog::warn("desk config changed; discarding {}", root.string());
      fs::remove_all(root);
    }
    fs::create_directories(root);
    num::write_json(root / "config.json", config_json);
    const auto data_dir = root / "data", vq_dir = root / "vq", lm_dir = root / "lm";

    cached(data_dir, "gen-data", [&] {
      app::gen_data(config, data_dir);
      return json::object();
    });
    const auto vq = cached(vq_dir, "train-vqvae", [&] {
      const auto r = app::train_tokenizer(config, data_dir, vq_dir);
      return json{{"epochs", r.epochs.size()}, {"val_recon", r.val_recon}, {"usage", r.usage}, {"seconds", r.seconds}};
    });
    const auto lm = cached(lm_dir, "train-lm", [&] {
      const auto r = app::train_transformer(config, data_dir, vq_dir, lm_dir);
      json val = json::array();
      for (const auto& e : r.epochs) val.push_back(e.val_loss);
      return json{{"initial_val_loss", r.initial_val_loss}, {"val_loss", val}, {"seconds", r.seconds}};
    });

    if (want(6)) {
      const double recon = vq.at("val_recon"), usage = vq.at("usage"), secs = vq.at("wall_seconds");
      const int epochs = vq.at("epochs");
      report({6, "desk VQ training",
              recon <= kVqRecon && usage >= kVqUsage && epochs <= kVqMaxEpochs && secs < kVqSeconds,
              printf_string("held-out recon %.4f (<= %.2f), usage %.3f (>= %.2f), %d epochs (<= %d), %.0fs (< %.0fs)", recon,
                  kVqRecon, usage, kVqUsage, epochs, kVqMaxEpochs, secs, kVqSeconds)});
    }

    if (want(7)) {
      const auto val = lm.at("val_loss").get<std::vector<double>>();
      const double init = lm.at("initial_val_loss"), secs = lm.at("wall_seconds");
      bool monotone = val.size() >= 3;
      double prev = init;
      for (std::size_t e = 0; e < std::min<std::size_t>(3, val.size()); ++e) {
        monotone = monotone && val[e] < prev;
        prev = val[e];
      }
      // Overfit a fresh model of the desk size on one training window.
      const auto pool = infer::read_token_pool(lm_dir / "train_tokens.bin");
      const seq::Vocabulary vocab{config.lm.content_vocab};
      const seq::ContextSampler sampler(pool, config.vq.tokens_per_frame(), vocab, config.context.n_max,
                                        config.context.m);
      num::Rng rng(num::hash_seed({config.seed, num::hash_string("overfit window")}));
      const auto window = lm::sample_windows(sampler, 1, config.lm.max_context, vocab, rng).at(0);
      lm::LmModel model(config.lm);
      const auto t0 = std::chrono::steady_clock::now();
      const auto losses = lm::overfit_lm(model, window, kOverfitSteps, kOverfitLr, kOverfitLoss);
      const double overfit_secs = seconds_since(t0);
      const bool overfit = losses.back() < kOverfitLoss && static_cast<int>(losses.size()) <= kOverfitSteps;
      report({7, "desk LM training", monotone && overfit && secs < kLmSeconds,
              printf_string("val %.4f -> %.4f -> %.4f -> %.4f (%s); overfit loss %.4g after %zu steps (%.0fs); "
                  "full run %.0fs (< %.0fs), final val %.4f",
                  init, val.size() > 0 ? val[0] : NAN, val.size() > 1 ? val[1] : NAN, val.size() > 2 ? val[2] : NAN,
                  monotone ? "monotone" : "not monotone", losses.back(), losses.size(), overfit_secs, secs,
                  kLmSeconds, val.empty() ? NAN : val.back())});
    }

    const bool need_eval = want(8) || want(9), need_uq = want(10), need_gen = want(11);
    if (need_eval || need_uq || need_gen) {
      const app::EvalContext ctx(data_dir, vq_dir, lm_dir, config.resolved_threads());
      if (need_eval) {
        const auto ev = cached(root / "eval", "eval", [&] {
          const auto r = app::run_eval(config, ctx, root / "eval");
          std::set<std::int64_t> envs;
          for (const auto& row : r.sweep.rows) envs.insert(row.env);
          return json{{"mean_adaptive", r.shots.mean_adaptive},
                      {"mean_temporal", r.shots.mean_temporal},
                      {"win_rate", r.shots.win_rate},
                      {"shot_envs", r.shots.rows.size()},
                      {"mean_by_n", r.sweep.mean_by_n},
                      {"count_by_n", r.sweep.count_by_n},
                      {"sweep_envs", envs.size()},
                      {"seeds", config.eval.seeds.size()}};
        });
        if (want(8)) {
          const double a = ev.at("mean_adaptive"), t = ev.at("mean_temporal"), w = ev.at("win_rate");
          report({8, "one-shot beats zero-shot", a < t && w >= kWinRate,
                  printf_string("mean rel L2 adaptive n=1 %.4f vs temporal %.4f; adaptive wins on %.0f%% of %d envs (>= %.0f%%)",
                      a, t, 100 * w, ev.at("shot_envs").get<int>(), 100 * kWinRate)});
        }
        if (want(9)) {
          const auto by_n = ev.at("mean_by_n").get<std::vector<double>>();
          const auto count = ev.at("count_by_n").get<std::vector<int>>();
          const int envs = ev.at("sweep_envs"), seeds = ev.at("seeds");
          const bool ok = by_n.size() >= 6 && count[0] > 0 && count[5] > 0 && by_n[5] <= by_n[0] &&
                          envs >= kSweepEnvs && seeds >= kSweepSeeds;
          std::string curve;
          for (std::size_t n = 0; n < by_n.size(); ++n) curve += printf_string("%sn=%zu %.4f", n ? ", " : "", n + 1, by_n[n]);
          report({9, "context-size trend", ok, printf_string("%s; %d envs, %d seeds", curve.c_str(), envs, seeds)});
        }
      }
      if (need_uq) {
        auto uq_config = config;
        uq_config.eval.uq_temperatures = {0.1, 1.0};
        uq_config.eval.uq_samples = kUqSamples;
        const auto uq = cached(root / "uq", "uq", [&] {
          const auto r = app::run_uq(uq_config, ctx, root / "uq");
          return json{{"temperatures", r.temperatures},
                      {"relative_std", r.mean_relative_std},
                      {"confidence", r.mean_confidence},
                      {"samples", r.samples}};
        });
        const auto rs = uq.at("relative_std").get<std::vector<double>>();
        const auto cl = uq.at("confidence").get<std::vector<double>>();
        const int samples = uq.at("samples");
        const double coverage = gaussian_coverage();
        const bool oracle = std::abs(coverage - kGaussianCoverage) <= kGaussianTolerance;
        report({10, "uncertainty trends", rs[1] > rs[0] && cl[1] >= cl[0] && samples == kUqSamples && oracle,
                printf_string("relative_std %.4f (tau 0.1) -> %.4f (tau 1.0); confidence %.4f -> %.4f; S=%d; "
                    "Gaussian oracle coverage %.4f (%.4f +- %.3f)",
                    rs[0], rs[1], cl[0], cl[1], samples, coverage, kGaussianCoverage, kGaussianTolerance)});
      }
      if (need_gen) {
        const auto gen = cached(root / "gen", "analyze-gen", [&] {
          const auto r = app::run_analyze_gen(config, ctx, root / "gen");
          return json{{"finite_fraction", r.finite_fraction}, {"fidelity", r.fidelity},
                      {"diversity", r.diversity},             {"diversity_l2", r.diversity_l2},
                      {"diversity_rms", r.diversity_rms},     {"temperature", config.eval.gen_temperature},
                      {"samples", config.eval.gen_samples}};
        });
        const double finite = gen.at("finite_fraction"), div = gen.at("diversity");
        const double div_l2 = gen.at("diversity_l2"), div_rms = gen.at("diversity_rms");
        const double tau = gen.at("temperature");
        report({11, "fidelity pipeline",
                finite >= kFiniteFraction && div > 0 && tau == 1.0 && std::isfinite(div_l2) && std::isfinite(div_rms),
                printf_string("finite fidelity for %.0f%% of samples (>= %.0f%%), fidelity %.4f; diversity at tau %.1f: "
                    "normalized %.4f, unnormalized l2 %.4f, rms %.4f",
                    100 * finite, 100 * kFiniteFraction, gen.at("fidelity").get<double>(), tau, div, div_l2,
                    div_rms)});
      }
    }
  }

  int failed = 0;
  json summary = json::array();
  for (const auto& o : outcomes) {
    failed += !o.passed;
    summary.push_back({{"criterion", o.id}, {"name", o.name}, {"passed", o.passed}, {"detail", o.detail}});
  }
  if (desk) num::write_json(fs::path(cache) / "acceptance.json", summary);
  std::printf("%zu criteria, %d failed\n", outcomes.size(), failed);
  return failed == 0 ? 0 : 1;
}
