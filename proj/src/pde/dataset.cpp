// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/pde/dataset.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstring>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "zebra/num/checkpoint.hpp"

namespace zebra::pde {

namespace fs = std::filesystem;

namespace {

Split split_from_json(const nlohmann::json& j) {
  Split s;
  s.envs = j.at("envs").get<std::vector<std::int64_t>>();
  s.traj_begin = j.at("traj_range").at(0).get<std::int64_t>();
  s.traj_end = j.at("traj_range").at(1).get<std::int64_t>();
  return s;
}

nlohmann::json split_to_json(const Split& s) {
  return {{"envs", s.envs}, {"traj_range", {s.traj_begin, s.traj_end}}};
}

std::pair<Split, Split> make_splits(const DatasetProfile& p) {
  Split train, test;
  if (p.test_traj_start > 0) {
    for (std::int64_t e = 0; e < p.n_envs(); ++e) {
      train.envs.push_back(e);
      test.envs.push_back(e);
    }
    train.traj_end = p.test_traj_start;
    test.traj_begin = p.test_traj_start;
    test.traj_end = p.traj_per_env;
  } else {
    for (std::int64_t e = 0; e < p.n_train_envs; ++e) train.envs.push_back(e);
    for (std::int64_t e = 0; e < p.n_test_envs; ++e) test.envs.push_back(p.n_train_envs + e);
    train.traj_end = p.traj_per_env;
    test.traj_end = p.test_traj_per_env > 0 ? p.test_traj_per_env : p.traj_per_env;
  }
  return {train, test};
}

}  // namespace

Dataset Dataset::open(const fs::path& dir) {
  Dataset d;
  d.dir_ = dir;
  d.meta_ = num::read_json(dir / "meta.json");
  d.family_ = parse_family(d.meta_.at("family").get<std::string>());
  d.profile_ = DatasetProfile::from_json(d.meta_.at("profile"));
  d.norm_scale_ = d.meta_.at("normalization").at("rms").get<double>();
  d.train_ = split_from_json(d.meta_.at("split").at("train"));
  d.test_ = split_from_json(d.meta_.at("split").at("test"));
  const auto params = num::read_json(dir / "params.json");
  for (const auto& e : params.at("environments")) {
    d.envs_.push_back(EnvironmentSpec::from_json(e));
  }
  if (static_cast<std::int64_t>(d.envs_.size()) != d.n_envs()) {
    throw num::IoError(dir.string() + ": params.json lists " + std::to_string(d.envs_.size()) +
                       " environments, meta.json declares " + std::to_string(d.n_envs()));
  }
  const auto bytes = num::read_bytes(dir / "data.bin");
  const auto expected = static_cast<std::size_t>(d.n_envs() * d.traj_per_env() * d.frames() * d.frame_size());
  if (bytes.size() != expected * sizeof(float)) {
    throw num::IoError((dir / "data.bin").string() + ": " + std::to_string(bytes.size()) + " bytes, expected " +
                       std::to_string(expected * sizeof(float)));
  }
  d.data_.resize(expected);
  std::memcpy(d.data_.data(), bytes.data(), bytes.size());
  return d;
}

const float* Dataset::frame(std::int64_t env, std::int64_t traj, std::int64_t t) const {
  if (env < 0 || env >= n_envs() || traj < 0 || traj >= traj_per_env() || t < 0 || t >= frames()) {
    throw std::out_of_range("frame (" + std::to_string(env) + "," + std::to_string(traj) + "," +
                            std::to_string(t) + ") outside dataset");
  }
  return data_.data() + ((env * traj_per_env() + traj) * frames() + t) * frame_size();
}

std::vector<float> Dataset::trajectory(std::int64_t env, std::int64_t traj) const {
  const float* p = frame(env, traj, 0);
  return {p, p + frames() * frame_size()};
}

void write_trajectories(const fs::path& path, const std::vector<float>& values) {
  num::write_bytes(path, values.data(), values.size() * sizeof(float));
}

void generate_dataset(Family family, const DatasetProfile& profile, std::uint64_t global_seed,
                      const fs::path& out_dir, const GenerateOptions& opt) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw num::IoError("cannot create " + out_dir.string() + ": " + ec.message());
  const auto [train, test] = make_splits(profile);
  const std::int64_t n_envs = profile.n_envs();
  const std::int64_t stored = profile.stored_traj_per_env();
  const std::int64_t traj_size = profile.frames * profile.frame_size();
  auto member = [](const Split& s, std::int64_t e, std::int64_t t) {
    return std::find(s.envs.begin(), s.envs.end(), e) != s.envs.end() && t >= s.traj_begin && t < s.traj_end;
  };

  std::vector<EnvironmentSpec> envs;
  for (std::int64_t e = 0; e < n_envs; ++e) envs.push_back(sample_environment(family, e, global_seed));

  const fs::path data_path = out_dir / "data.bin";
  const fs::path tmp_path = data_path.string() + ".tmp";
  std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
  if (!out) throw num::IoError("cannot open " + tmp_path.string() + " for writing");

  // Workers fill whole environments; the calling thread writes them in order.
  std::mutex mu;
  std::condition_variable cv;
  std::map<std::int64_t, std::vector<float>> ready;
  std::atomic<std::int64_t> next{0};
  std::exception_ptr failure;
  const int threads = std::max(1, opt.threads);
  auto make_block = [&](std::int64_t e) {
    std::vector<float> block(static_cast<std::size_t>(stored * traj_size), 0.0f);
    for (std::int64_t t = 0; t < stored; ++t) {
      if (!member(train, e, t) && !member(test, e, t)) continue;
      const auto tr = generate_trajectory(envs[e], profile, global_seed, t);
      std::copy(tr.values.begin(), tr.values.end(), block.begin() + t * traj_size);
    }
    return block;
  };
  auto worker = [&] {
    for (;;) {
      const std::int64_t e = next.fetch_add(1);
      if (e >= n_envs) return;
      std::vector<float> block;
      try {
        block = make_block(e);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        next = n_envs;
        cv.notify_all();
        return;
      }
      std::unique_lock lock(mu);
      ready.emplace(e, std::move(block));
      cv.notify_all();
    }
  };
  std::vector<std::jthread> pool;
  for (int i = 0; i < threads - 1; ++i) pool.emplace_back(worker);

  double train_sq = 0.0;
  std::int64_t train_count = 0;
  for (std::int64_t e = 0; e < n_envs; ++e) {
    std::vector<float> block;
    if (threads == 1) {
      block = make_block(e);
    } else {
      std::unique_lock lock(mu);
      cv.wait(lock, [&] { return failure || ready.count(e); });
      if (failure) break;
      block = std::move(ready[e]);
      ready.erase(e);
    }
    for (std::int64_t t = 0; t < stored; ++t) {
      if (!member(train, e, t)) continue;
      for (std::int64_t i = 0; i < traj_size; ++i) {
        const double v = block[t * traj_size + i];
        train_sq += v * v;
      }
      train_count += traj_size;
    }
    out.write(reinterpret_cast<const char*>(block.data()), static_cast<std::streamsize>(block.size() * sizeof(float)));
    if (!out) {
      next = n_envs;
      throw num::IoError("write failed: " + tmp_path.string());
    }
    if ((e + 1) % 16 == 0 || e + 1 == n_envs) spdlog::info("gen-data: {}/{} environments", e + 1, n_envs);
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  out.close();
  fs::rename(tmp_path, data_path, ec);
  if (ec) throw num::IoError("cannot rename " + tmp_path.string() + ": " + ec.message());

  const double rms = train_count > 0 ? std::sqrt(train_sq / static_cast<double>(train_count)) : 1.0;
  nlohmann::json params = nlohmann::json::array();
  for (const auto& e : envs) params.push_back(e.to_json());
  num::write_json(out_dir / "params.json", nlohmann::json{{"environments", params}});

  nlohmann::json shape = {n_envs, stored, profile.frames, 1};
  for (auto g : profile.grid) shape.push_back(g);
  nlohmann::json schema;
  switch (family) {
    case Family::advection: schema = {"beta"}; break;
    case Family::heat:
    case Family::burgers: schema = {"alpha", "beta", "gamma", "forcing"}; break;
    case Family::combined: schema = {"alpha", "beta", "gamma"}; break;
    case Family::wave_b: schema = {"c", "boundary"}; break;
    case Family::vorticity2d: schema = {"nu"}; break;
    case Family::wave2d: schema = {"c", "k"}; break;
  }
  nlohmann::json meta = {
      {"format", "zebra-dataset-1"},
      {"family", family_name(family)},
      {"profile", profile.to_json()},
      {"global_seed", global_seed},
      {"data", {{"file", "data.bin"}, {"dtype", "f32"}, {"endianness", "little"}, {"order", "C"},
                {"shape", shape}, {"axes", {"env", "traj", "time", "channel", "space..."}}}},
      {"param_schema", schema},
      {"normalization", {{"rms", rms}, {"computed_on", "train"}}},
      {"split", {{"train", split_to_json(train)}, {"test", split_to_json(test)}}},
      {"frame_times", "t_j = j * t_final / (frames - 1)"},
      {"unused_slots", "trajectory slots outside both splits are zero"},
      {"assumptions",
       {{"forcing_omega_range", {-0.4, 0.4}},
        {"vorticity_ic", {{"k0", 10}, {"scale", "unit rms"}}},
        {"wave_b_pulse_sigma", 0.5}}},
  };
  if (!opt.config.is_null()) meta["config"] = opt.config;
  num::write_json(out_dir / "meta.json", meta);
}

}  // namespace zebra::pde
