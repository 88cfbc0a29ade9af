// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/app/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>

#include "zebra/app/plot.hpp"
#include "zebra/eval/metrics.hpp"
#include "zebra/num/checkpoint.hpp"
#include "zebra/num/rng.hpp"
#include "zebra/pde/dataset.hpp"
#include "zebra/pde/symmetry.hpp"
#include "zebra/vq/tokenizer.hpp"

namespace zebra::app {

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw num::IoError("cannot create " + dir.string() + ": " + ec.message());
}

void check_grid(const pde::Dataset& data, const RunConfig& config) {
  if (data.profile().grid != config.vq.grid)
    throw std::invalid_argument("dataset grid does not match vq.grid of the config; pass the config used for " +
                                data.dir().string());
}

}  // namespace

void write_run_record(const fs::path& dir, const RunConfig& config, const std::string& command,
                      const nlohmann::json& inputs) {
  ensure_dir(dir);
  num::write_json(dir / "config.json", config.to_json());
  num::write_json(dir / "run.json", {{"command", command}, {"inputs", inputs}, {"seed", config.seed}});
}

fs::path checkpoint_dir(const fs::path& dir) {
  return fs::exists(dir / "checkpoint") ? dir / "checkpoint" : dir;
}

void gen_data(const RunConfig& config, const fs::path& out) {
  pde::GenerateOptions opt;
  opt.threads = config.resolved_threads();
  opt.config = config.to_json();
  pde::generate_dataset(config.family, config.dataset, config.seed, out, opt);
}

vq::VqTrainResult train_tokenizer(const RunConfig& config, const fs::path& data_dir, const fs::path& out) {
  const auto data = pde::Dataset::open(data_dir);
  check_grid(data, config);
  auto tc = config.vq_train;
  tc.echo = config.to_json();
  return vq::train_vqvae(data, config.vq, tc, out);
}

lm::LmTrainResult train_transformer(const RunConfig& config, const fs::path& data_dir, const fs::path& vq_dir,
                                    const fs::path& out) {
  const auto data = pde::Dataset::open(data_dir);
  const auto tok = vq::Tokenizer::load(checkpoint_dir(vq_dir));
  if (tok.frame_size() != data.frame_size())
    throw std::invalid_argument("tokenizer frame size " + std::to_string(tok.frame_size()) + " does not match dataset " +
                                std::to_string(data.frame_size()));
  if (tok.codebook_size() != config.lm.content_vocab)
    throw std::invalid_argument("tokenizer codebook size " + std::to_string(tok.codebook_size()) +
                                " does not match lm.content_vocab " + std::to_string(config.lm.content_vocab));
  ensure_dir(out);
  const int threads = config.resolved_threads();
  const auto tpf = tok.tokens_per_frame();
  auto train_pool = infer::tokenize_split(tok, data, data.train(), threads);
  auto test_pool = infer::tokenize_split(tok, data, data.test(), threads);
  infer::write_token_pool(out / "train_tokens.bin", train_pool, tpf, {{"split", "train"}});
  infer::write_token_pool(out / "test_tokens.bin", test_pool, tpf, {{"split", "test"}});

  const seq::Vocabulary vocab{tok.codebook_size()};
  const seq::ContextSampler sampler(std::move(train_pool), tpf, vocab, config.context.n_max, config.context.m);
  const seq::ContextSampler val_sampler(std::move(test_pool), tpf, vocab, config.context.n_max, config.context.m);
  num::Rng vr(num::hash_seed({config.seed, num::hash_string("validation windows")}));
  const auto val = lm::sample_windows(val_sampler, config.context.val_windows, config.lm.max_context, vocab, vr);
  spdlog::info("lm: {} training trajectories, {} validation windows", sampler.pool().size(), val.size());

  lm::LmModel model(config.lm);
  auto tc = config.lm_train;
  tc.echo = config.to_json();
  if (!tc.augment) return lm::train_lm(model, sampler, val, tc, out);

  std::map<std::int64_t, pde::Symmetries> symmetry;
  const int dims = static_cast<int>(data.profile().grid.size());
  for (auto e : data.train().envs) symmetry[e] = pde::symmetries(data.environment(e), dims);
  std::optional<seq::ContextSampler> augmented;
  int augmented_epoch = 0;
  const lm::EpochSampler per_epoch = [&](int epoch) -> const seq::ContextSampler& {
    if (epoch != augmented_epoch) {
      auto pool = infer::tokenize_split(tok, data, data.train(), threads,
                                        [&](std::int64_t env, std::int64_t traj, std::vector<float>& values) {
                                          num::Rng rng(num::hash_seed({tc.seed, num::hash_string("augment"),
                                                                       static_cast<std::uint64_t>(epoch),
                                                                       static_cast<std::uint64_t>(env),
                                                                       static_cast<std::uint64_t>(traj)}));
                                          pde::apply_random_symmetry(symmetry.at(env), data.profile().grid, values,
                                                                     rng);
                                        });
      augmented.emplace(std::move(pool), tpf, vocab, config.context.n_max, config.context.m);
      augmented_epoch = epoch;
    }
    return *augmented;
  };
  std::size_t with_symmetry = 0;
  for (const auto& [e, s] : symmetry) with_symmetry += s.any();
  spdlog::info("lm: augmenting {} of {} training environments", with_symmetry, symmetry.size());
  return lm::train_lm(model, per_epoch, val, tc, out);
}

EvalContext::EvalContext(const fs::path& data_dir, const fs::path& vq_dir, const fs::path& lm_dir, int threads_)
    : data(pde::Dataset::open(data_dir)),
      engine(infer::Engine::load(checkpoint_dir(vq_dir), checkpoint_dir(lm_dir))),
      test(data, infer::tokenize_split(engine.tokenizer(), data, data.test(), threads_)),
      threads(threads_) {
  if (engine.frame_size() != data.frame_size())
    throw std::invalid_argument("tokenizer frame size does not match the dataset in " + data_dir.string());
}

eval::EvalSettings EvalContext::settings(const RunConfig& config) const {
  eval::EvalSettings s;
  s.window = config.eval.window;
  s.temperature = config.eval.temperature;
  s.seed = config.seed;
  s.threads = threads;
  return s;
}

nlohmann::json run_infer(const RunConfig& config, const EvalContext& ctx, const fs::path& out) {
  ensure_dir(out);
  const auto& ic = config.infer;
  const auto fs_ = ctx.data.frame_size();
  const auto tpf = ctx.engine.tokens_per_frame();
  const auto T = ctx.data.frames();
  const bool generative = ic.mode == infer::Mode::generative;
  const int observed = generative ? 0 : ic.observed;
  const int n_ctx = ic.mode == infer::Mode::temporal ? 0 : ic.n_context;
  const std::int64_t ctx_frames = std::min(config.context.m, T);

  std::vector<std::int64_t> envs = ctx.test.envs();
  if (ic.env >= 0) {
    if (std::find(envs.begin(), envs.end(), ic.env) == envs.end())
      throw std::invalid_argument("infer.env " + std::to_string(ic.env) + " is not a test environment");
    envs = {ic.env};
  }
  const std::int64_t out_frames = observed + ic.target_frames;
  std::vector<float> predictions;
  predictions.reserve(static_cast<std::size_t>(envs.size() * ic.samples * out_frames * fs_));

  std::ofstream csv(out / "errors.csv");
  csv << "env,target,sample,frame,rel_l2\n";
  nlohmann::json per_env = nlohmann::json::array();
  std::vector<Series> curves;
  double total = 0;
  int scored = 0;

  for (std::size_t ei = 0; ei < envs.size(); ++ei) {
    const auto env = envs[ei];
    const auto& trajs = ctx.test.trajectories(env);
    const std::int64_t target = ic.traj >= 0 ? ic.traj : trajs.front();
    if (std::find(trajs.begin(), trajs.end(), target) == trajs.end())
      throw std::invalid_argument("infer.traj " + std::to_string(target) + " is not stored for env " + std::to_string(env));
    std::vector<std::int64_t> context_ids;
    for (auto t : trajs)
      if (t != target && static_cast<int>(context_ids.size()) < n_ctx) context_ids.push_back(t);
    if (static_cast<int>(context_ids.size()) < n_ctx)
      throw std::invalid_argument("env " + std::to_string(env) + " has only " + std::to_string(context_ids.size()) +
                                  " other trajectories for infer.n_context " + std::to_string(n_ctx));

    std::vector<std::span<const std::int32_t>> context;
    for (auto t : context_ids)
      context.push_back(std::span(ctx.test.tokens(env, t).tokens).first(static_cast<std::size_t>(ctx_frames * tpf)));
    const auto& target_tokens = ctx.test.tokens(env, target).tokens;
    const auto obs = std::span(target_tokens).first(static_cast<std::size_t>(observed * tpf));

    infer::PromptSpec spec;
    spec.mode = ic.mode;
    spec.observed = observed;
    spec.target_frames = ic.target_frames;
    spec.temperature = ic.temperature;
    spec.samples = ic.samples;
    spec.seed = num::hash_seed({config.seed, static_cast<std::uint64_t>(env)});
    const auto r = ctx.engine.rollout(spec, context, obs, ctx.threads);

    const auto truth = ctx.data.trajectory(env, target);
    nlohmann::json samples = nlohmann::json::array();
    for (int s = 0; s < ic.samples; ++s) {
      std::vector<float> full(truth.begin(), truth.begin() + observed * fs_);
      full.insert(full.end(), r.frames[static_cast<std::size_t>(s)].begin(), r.frames[static_cast<std::size_t>(s)].end());
      predictions.insert(predictions.end(), full.begin(), full.end());
      Series curve;
      curve.color = palette(ei);
      for (std::int64_t f = observed; f < out_frames && f < T; ++f) {
        const double e = eval::relative_l2(std::span(full).subspan(static_cast<std::size_t>(f * fs_), fs_),
                                           std::span(truth).subspan(static_cast<std::size_t>(f * fs_), fs_));
        csv << env << ',' << target << ',' << s << ',' << f << ',' << e << '\n';
        curve.x.push_back(static_cast<double>(f));
        curve.y.push_back(e);
      }
      double traj_err = std::nan("");
      if (!generative && out_frames <= T) {
        traj_err = eval::relative_l2(std::span(full).subspan(static_cast<std::size_t>(observed * fs_)),
                                     std::span(truth).subspan(static_cast<std::size_t>(observed * fs_),
                                                              static_cast<std::size_t>(ic.target_frames * fs_)));
        total += traj_err;
        ++scored;
      }
      samples.push_back({{"sample", s}, {"rel_l2", std::isfinite(traj_err) ? nlohmann::json(traj_err) : nlohmann::json()}});
      if (s == 0) curves.push_back(std::move(curve));
    }
    per_env.push_back({{"env", env},
                       {"target", target},
                       {"context", context_ids},
                       {"prompt_tokens", r.prompt.size()},
                       {"samples", samples}});
  }

  nlohmann::json shape = {envs.size(), ic.samples, out_frames, 1};
  for (auto g : ctx.data.profile().grid) shape.push_back(g);
  pde::write_trajectories(out / "predictions.bin", predictions);
  nlohmann::json spec_json = {{"mode", infer::mode_name(ic.mode)},
                              {"observed", observed},
                              {"n_context", n_ctx},
                              {"context_frames", ctx_frames},
                              {"target_frames", ic.target_frames},
                              {"temperature", ic.temperature},
                              {"samples", ic.samples}};
  nlohmann::json meta = {
      {"format", "zebra-predictions-1"},
      {"data", {{"file", "predictions.bin"}, {"dtype", "f32"}, {"endianness", "little"}, {"order", "C"},
                {"shape", shape}, {"axes", {"env", "sample", "time", "channel", "space..."}}}},
      {"units", "physical"},
      {"frames", "the first `observed` frames are copied from the target, the rest are generated"},
      {"family", pde::family_name(ctx.data.family())},
      {"dataset", fs::absolute(ctx.data.dir()).string()},
      {"prompt", spec_json},
      {"environments", per_env},
      {"mean_rel_l2", scored ? nlohmann::json(total / scored) : nlohmann::json()},
  };
  num::write_json(out / "pred_meta.json", meta);
  write_line_plot(out / "rollout.png", curves);
  return meta;
}

EvalReport run_eval(const RunConfig& config, const EvalContext& ctx, const fs::path& out) {
  ensure_dir(out);
  const auto s = ctx.settings(config);
  EvalReport r;
  r.shots = eval::compare_zero_one_shot(ctx.engine, ctx.test, s);
  r.shots.write_csv(out / "shots.csv");
  r.sweep = eval::context_sweep(ctx.engine, ctx.test, config.eval.context_sizes, config.eval.seeds, s);
  r.sweep.write_csv(out / "sweep.csv");
  r.sweep.write_summary_csv(out / "sweep_summary.csv");
  num::write_json(out / "summary.json", {{"shots", r.shots.summary()}, {"sweep", r.sweep.summary()}});

  Series adaptive, temporal;
  adaptive.markers = temporal.markers = true;
  adaptive.color = palette(0), temporal.color = palette(1);
  for (std::size_t i = 0; i < r.shots.rows.size(); ++i) {
    adaptive.x.push_back(static_cast<double>(i)), adaptive.y.push_back(r.shots.rows[i].adaptive);
    temporal.x.push_back(static_cast<double>(i)), temporal.y.push_back(r.shots.rows[i].temporal);
  }
  write_line_plot(out / "shots.png", {temporal, adaptive});
  Series curve;
  for (int n : config.eval.context_sizes) {
    curve.x.push_back(n);
    curve.y.push_back(r.sweep.mean_by_n.at(static_cast<std::size_t>(n - 1)));
  }
  write_line_plot(out / "sweep.png", {curve});
  return r;
}

eval::UqExperiment run_uq(const RunConfig& config, const EvalContext& ctx, const fs::path& out) {
  ensure_dir(out);
  auto r = eval::uq_experiment(ctx.engine, ctx.test, config.eval.uq_temperatures, config.eval.uq_samples,
                               ctx.settings(config));
  r.write_csv(out / "uq.csv");
  num::write_json(out / "summary.json", r.summary());
  Series rstd, conf;
  rstd.x = conf.x = r.temperatures;
  rstd.y = r.mean_relative_std;
  conf.y = r.mean_confidence;
  rstd.color = palette(0), conf.color = palette(1);
  write_line_plot(out / "relative_std.png", {rstd});
  write_line_plot(out / "confidence.png", {conf});
  return r;
}

eval::GenerativeAnalysis run_analyze_gen(const RunConfig& config, const EvalContext& ctx, const fs::path& out) {
  ensure_dir(out);
  auto r = eval::analyze_generation(ctx.engine, ctx.test, config.eval.gen_samples, config.eval.gen_temperature,
                                    ctx.settings(config));
  r.write_csv(out / "generation.csv");
  r.write_pca_csv(out / "pca.csv");
  num::write_json(out / "summary.json", r.summary());
  Series generated, real;
  generated.markers = real.markers = true;
  generated.color = palette(0), real.color = palette(3);
  for (std::size_t i = 0; i < r.pca_coords.size(); ++i) {
    auto& s = r.pca_labels[i] == "real" ? real : generated;
    s.x.push_back(r.pca_coords[i][0]);
    s.y.push_back(r.pca_coords[i][1]);
  }
  write_line_plot(out / "pca.png", {generated, real});
  Series fid;
  fid.markers = true;
  for (std::size_t i = 0; i < r.rows.size(); ++i) fid.x.push_back(static_cast<double>(i)), fid.y.push_back(r.rows[i].stats.fidelity);
  write_line_plot(out / "fidelity.png", {fid});
  return r;
}

}  // namespace zebra::app
