// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/eval/experiments.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "zebra/num/checkpoint.hpp"
#include "zebra/num/rng.hpp"

namespace zebra::eval {

namespace {

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    try {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  };
  std::vector<std::thread> pool;
  for (int i = 1; i < std::min<int>(threads, static_cast<int>(n)); ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::ofstream open_csv(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw num::IoError("cannot open " + path.string());
  out.precision(9);
  return out;
}

// Uniform shuffle of v with rng.
template <typename T>
void shuffle(std::vector<T>& v, num::Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_int(0, i - 1)]);
}

std::span<const std::int32_t> first_frames(const seq::TokenTrajectory& t, std::int64_t frames, std::int64_t tpf) {
  const auto n = static_cast<std::size_t>(frames * tpf);
  if (t.tokens.size() < n) throw std::invalid_argument("trajectory shorter than the evaluation window");
  return std::span<const std::int32_t>(t.tokens).first(n);
}

// Truth frames [1, window) of a stored trajectory.
std::vector<float> future_truth(const pde::Dataset& data, std::int64_t env, std::int64_t traj, std::int64_t window) {
  const auto fs = data.frame_size();
  const auto all = data.trajectory(env, traj);
  return {all.begin() + fs, all.begin() + fs * window};
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

TestSet::TestSet(const pde::Dataset& data, std::vector<seq::TokenTrajectory> pool) : data_(&data), pool_(std::move(pool)) {
  for (std::size_t i = 0; i < pool_.size(); ++i) {
    by_env_[pool_[i].env].push_back(pool_[i].traj);
    index_[{pool_[i].env, pool_[i].traj}] = i;
  }
  for (auto& [env, trajs] : by_env_) std::sort(trajs.begin(), trajs.end());
}

std::vector<std::int64_t> TestSet::envs() const {
  std::vector<std::int64_t> out;
  for (const auto& [env, trajs] : by_env_) out.push_back(env);
  return out;
}

const std::vector<std::int64_t>& TestSet::trajectories(std::int64_t env) const { return by_env_.at(env); }

const seq::TokenTrajectory& TestSet::tokens(std::int64_t env, std::int64_t traj) const {
  return pool_.at(index_.at({env, traj}));
}

ShotComparison compare_zero_one_shot(const infer::Engine& engine, const TestSet& test, const EvalSettings& s) {
  const auto tpf = engine.tokens_per_frame();
  const auto envs = test.envs();
  ShotComparison out;
  out.rows.resize(envs.size());
  std::vector<char> valid(envs.size(), 0);
  parallel_for(envs.size(), s.threads, [&](std::size_t i) {
    const auto env = envs[i];
    auto trajs = test.trajectories(env);
    if (trajs.size() < 2) {
      spdlog::warn("env {}: fewer than two test trajectories, skipped", env);
      return;
    }
    num::Rng rng(num::hash_seed({s.seed, static_cast<std::uint64_t>(env), num::hash_string("shot")}));
    shuffle(trajs, rng);
    ShotRow row{env, trajs[0], trajs[1], 0, 0};
    const auto& target = test.tokens(env, row.target);
    const auto truth = future_truth(test.data(), env, row.target, s.window);
    infer::PromptSpec spec;
    spec.target_frames = s.window - 1;
    spec.temperature = s.temperature;
    spec.observed = 1;
    spec.seed = num::hash_seed({s.seed, static_cast<std::uint64_t>(env), 1});
    spec.mode = infer::Mode::adaptive;
    const auto a = engine.rollout(spec, {first_frames(test.tokens(env, row.context), s.window, tpf)},
                                  first_frames(target, 1, tpf));
    spec.mode = infer::Mode::temporal;
    const auto t = engine.rollout(spec, {}, first_frames(target, 1, tpf));
    row.adaptive = relative_l2(a.frames[0], truth);
    row.temporal = relative_l2(t.frames[0], truth);
    out.rows[i] = row;
    valid[i] = 1;
  });
  std::vector<ShotRow> kept;
  for (std::size_t i = 0; i < envs.size(); ++i)
    if (valid[i]) kept.push_back(out.rows[i]);
  out.rows = std::move(kept);
  std::vector<double> a, t;
  int wins = 0;
  for (const auto& r : out.rows) {
    a.push_back(r.adaptive);
    t.push_back(r.temporal);
    wins += r.adaptive < r.temporal;
  }
  out.mean_adaptive = mean_of(a);
  out.mean_temporal = mean_of(t);
  out.win_rate = out.rows.empty() ? 0.0 : static_cast<double>(wins) / static_cast<double>(out.rows.size());
  return out;
}

void ShotComparison::write_csv(const std::filesystem::path& path) const {
  auto out = open_csv(path);
  out << "env,target,context,rel_l2_adaptive_n1,rel_l2_temporal_l1\n";
  for (const auto& r : rows) out << r.env << ',' << r.target << ',' << r.context << ',' << r.adaptive << ',' << r.temporal << '\n';
}

nlohmann::json ShotComparison::summary() const {
  return {{"envs", rows.size()}, {"mean_rel_l2_adaptive_n1", mean_adaptive},
          {"mean_rel_l2_temporal_l1", mean_temporal}, {"adaptive_win_rate", win_rate}};
}

ContextSweep context_sweep(const infer::Engine& engine, const TestSet& test, const std::vector<int>& ns,
                           const std::vector<std::uint64_t>& seeds, const EvalSettings& s) {
  const auto tpf = engine.tokens_per_frame();
  const auto envs = test.envs();
  const int n_top = ns.empty() ? 0 : *std::max_element(ns.begin(), ns.end());
  struct Job {
    std::uint64_t seed;
    std::int64_t env;
    int n;
  };
  std::vector<Job> jobs;
  ContextSweep out;
  for (auto seed : seeds)
    for (auto env : envs)
      for (int n : ns) {
        if (static_cast<int>(test.trajectories(env).size()) < n + 1) {
          spdlog::warn("env {}: {} test trajectories cannot host n = {}, skipped", env, test.trajectories(env).size(), n);
          ++out.skipped;
          continue;
        }
        jobs.push_back({seed, env, n});
      }
  std::vector<SweepRow> rows(jobs.size());
  parallel_for(jobs.size(), s.threads, [&](std::size_t i) {
    const auto& job = jobs[i];
    auto trajs = test.trajectories(job.env);
    num::Rng rng(num::hash_seed({job.seed, static_cast<std::uint64_t>(job.env), num::hash_string("sweep")}));
    shuffle(trajs, rng);
    const auto target = trajs[0];
    std::vector<std::span<const std::int32_t>> context;
    for (int c = 1; c <= job.n; ++c) context.push_back(first_frames(test.tokens(job.env, trajs[c]), s.window, tpf));
    infer::PromptSpec spec;
    spec.mode = infer::Mode::adaptive;
    spec.target_frames = s.window - 1;
    spec.temperature = s.temperature;
    spec.seed = num::hash_seed({job.seed, static_cast<std::uint64_t>(job.env), static_cast<std::uint64_t>(job.n)});
    const auto r = engine.rollout(spec, context, first_frames(test.tokens(job.env, target), 1, tpf));
    rows[i] = {job.seed, job.n, job.env, target,
               relative_l2(r.frames[0], future_truth(test.data(), job.env, target, s.window))};
  });
  out.rows = std::move(rows);
  out.mean_by_n.assign(static_cast<std::size_t>(n_top), 0.0);
  out.count_by_n.assign(static_cast<std::size_t>(n_top), 0);
  for (const auto& r : out.rows) {
    out.mean_by_n[r.n - 1] += r.rel_l2;
    out.count_by_n[r.n - 1]++;
  }
  for (int n = 0; n < n_top; ++n)
    out.mean_by_n[n] = out.count_by_n[n] > 0 ? out.mean_by_n[n] / out.count_by_n[n] : std::nan("");
  return out;
}

void ContextSweep::write_csv(const std::filesystem::path& path) const {
  auto out = open_csv(path);
  out << "seed,n,env,target,rel_l2\n";
  for (const auto& r : rows) out << r.seed << ',' << r.n << ',' << r.env << ',' << r.target << ',' << r.rel_l2 << '\n';
}

void ContextSweep::write_summary_csv(const std::filesystem::path& path) const {
  auto out = open_csv(path);
  out << "n,mean_rel_l2,count\n";
  for (std::size_t n = 0; n < mean_by_n.size(); ++n)
    if (count_by_n[n] > 0) out << n + 1 << ',' << mean_by_n[n] << ',' << count_by_n[n] << '\n';
}

nlohmann::json ContextSweep::summary() const {
  nlohmann::json by_n = nlohmann::json::object();
  for (std::size_t n = 0; n < mean_by_n.size(); ++n)
    if (count_by_n[n] > 0) by_n[std::to_string(n + 1)] = {{"mean_rel_l2", mean_by_n[n]}, {"count", count_by_n[n]}};
  return {{"by_n", by_n}, {"skipped", skipped}};
}

UqExperiment uq_experiment(const infer::Engine& engine, const TestSet& test, const std::vector<double>& temperatures,
                           int samples, const EvalSettings& s) {
  const auto tpf = engine.tokens_per_frame();
  const auto envs = test.envs();
  UqExperiment out;
  out.temperatures = temperatures;
  out.samples = samples;
  std::vector<UqRow> rows(envs.size() * temperatures.size());
  std::vector<char> valid(rows.size(), 0);
  parallel_for(rows.size(), s.threads, [&](std::size_t i) {
    const auto env = envs[i / temperatures.size()];
    const double tau = temperatures[i % temperatures.size()];
    auto trajs = test.trajectories(env);
    if (trajs.size() < 2) return;
    num::Rng rng(num::hash_seed({s.seed, static_cast<std::uint64_t>(env), num::hash_string("uq")}));
    shuffle(trajs, rng);
    infer::PromptSpec spec;
    spec.mode = infer::Mode::adaptive;
    spec.target_frames = s.window - 1;
    spec.temperature = tau;
    spec.samples = samples;
    spec.seed = num::hash_seed({s.seed, static_cast<std::uint64_t>(env), num::hash_string("uq-samples")});
    const auto r = engine.rollout(spec, {first_frames(test.tokens(env, trajs[1]), s.window, tpf)},
                                  first_frames(test.tokens(env, trajs[0]), 1, tpf));
    const auto truth = future_truth(test.data(), env, trajs[0], s.window);
    std::vector<std::span<const float>> views(r.frames.begin(), r.frames.end());
    const auto st = uq_stats(views, truth);
    const std::vector<float> mean(st.mean.begin(), st.mean.end());
    rows[i] = {env, trajs[0], tau, st.relative_std, st.confidence_level, relative_l2(mean, truth)};
    valid[i] = 1;
  });
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (valid[i]) out.rows.push_back(rows[i]);
  for (double tau : temperatures) {
    std::vector<double> rs, cl;
    for (const auto& r : out.rows)
      if (r.temperature == tau) rs.push_back(r.relative_std), cl.push_back(r.confidence_level);
    out.mean_relative_std.push_back(mean_of(rs));
    out.mean_confidence.push_back(mean_of(cl));
  }
  return out;
}

void UqExperiment::write_csv(const std::filesystem::path& path) const {
  auto out = open_csv(path);
  out << "env,target,temperature,relative_std,confidence_level,rel_l2_of_mean\n";
  for (const auto& r : rows)
    out << r.env << ',' << r.target << ',' << r.temperature << ',' << r.relative_std << ',' << r.confidence_level << ','
        << r.rel_l2_mean << '\n';
}

nlohmann::json UqExperiment::summary() const {
  nlohmann::json by_t = nlohmann::json::array();
  for (std::size_t i = 0; i < temperatures.size(); ++i)
    by_t.push_back({{"temperature", temperatures[i]},
                    {"mean_relative_std", mean_relative_std[i]},
                    {"mean_confidence_level", mean_confidence[i]}});
  return {{"samples", samples}, {"by_temperature", by_t}};
}

GenerativeAnalysis analyze_generation(const infer::Engine& engine, const TestSet& test, int samples,
                                      double temperature, const EvalSettings& s) {
  const auto tpf = engine.tokens_per_frame();
  const auto fs = engine.frame_size();
  const auto envs = test.envs();
  const auto& data = test.data();
  GenerativeAnalysis out;
  std::vector<GenerativeRow> rows(envs.size());
  std::vector<std::vector<float>> first_env_ics;
  parallel_for(envs.size(), s.threads, [&](std::size_t i) {
    const auto env = envs[i];
    auto trajs = test.trajectories(env);
    num::Rng rng(num::hash_seed({s.seed, static_cast<std::uint64_t>(env), num::hash_string("generate")}));
    shuffle(trajs, rng);
    const auto r = engine.sample_new_trajectories(first_frames(test.tokens(env, trajs[0]), s.window, tpf), s.window,
                                                  samples, temperature,
                                                  num::hash_seed({s.seed, static_cast<std::uint64_t>(env), 7}));
    std::vector<std::span<const float>> views(r.frames.begin(), r.frames.end());
    rows[i] = {env, trajs[0], fidelity_diversity(views, s.window, data.environment(env), data.profile())};
    if (i == 0) {
      for (const auto& f : r.frames) first_env_ics.emplace_back(f.begin(), f.begin() + fs);
    }
  });
  out.rows = std::move(rows);
  std::vector<double> fid, div, div_l2, div_rms;
  int solved = 0, total = 0;
  for (const auto& r : out.rows) {
    if (r.stats.solved > 0) fid.push_back(r.stats.fidelity);
    div.push_back(r.stats.diversity);
    div_l2.push_back(r.stats.diversity_l2);
    div_rms.push_back(r.stats.diversity_rms);
    solved += r.stats.solved;
    total += r.stats.samples;
  }
  out.fidelity = mean_of(fid);
  out.diversity = mean_of(div);
  out.diversity_l2 = mean_of(div_l2);
  out.diversity_rms = mean_of(div_rms);
  out.finite_fraction = total > 0 ? static_cast<double>(solved) / total : 0.0;

  if (!envs.empty()) {
    std::vector<std::vector<float>> fields = first_env_ics;
    for (std::size_t i = 0; i < fields.size(); ++i) out.pca_labels.push_back("generated");
    for (auto traj : test.trajectories(envs[0])) {
      const float* f = data.frame(envs[0], traj, 0);
      fields.emplace_back(f, f + fs);
      out.pca_labels.push_back("real");
    }
    if (fields.size() >= 3) {
      std::vector<std::span<const float>> views(fields.begin(), fields.end());
      const auto p = pca2(views);
      out.pca_coords = p.coords;
    } else {
      out.pca_labels.clear();
    }
  }
  return out;
}

void GenerativeAnalysis::write_csv(const std::filesystem::path& path) const {
  auto out = open_csv(path);
  out << "env,context,samples,solved,failed,fidelity_rel_l2,diversity_rel,diversity_l2,diversity_rms\n";
  for (const auto& r : rows)
    out << r.env << ',' << r.context << ',' << r.stats.samples << ',' << r.stats.solved << ',' << r.stats.failed << ','
        << r.stats.fidelity << ',' << r.stats.diversity << ',' << r.stats.diversity_l2 << ',' << r.stats.diversity_rms
        << '\n';
}

void GenerativeAnalysis::write_pca_csv(const std::filesystem::path& path) const {
  auto out = open_csv(path);
  out << "label,pc1,pc2\n";
  for (std::size_t i = 0; i < pca_coords.size(); ++i)
    out << pca_labels[i] << ',' << pca_coords[i][0] << ',' << pca_coords[i][1] << '\n';
}

nlohmann::json GenerativeAnalysis::summary() const {
  return {{"fidelity_rel_l2", fidelity},
          {"diversity_rel", diversity},
          {"diversity_l2", diversity_l2},
          {"diversity_rms", diversity_rms},
          {"finite_fraction", finite_fraction},
          {"diversity_definition",
           "mean over unordered sample pairs; rel = ||a-b|| / sqrt((||a||^2+||b||^2)/2), l2 = ||a-b||, rms = "
           "||a-b|| / sqrt(points)"}};
}

}  // namespace zebra::eval
