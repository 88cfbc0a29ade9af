// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/pde/environment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "zebra/num/rng.hpp"
#include "zebra/pde/fft.hpp"

namespace zebra::pde {

using num::Rng;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct FamilyInfo {
  Family family;
  const char* name;
  int dims;
};

constexpr FamilyInfo kFamilies[] = {
    {Family::advection, "advection", 1}, {Family::heat, "heat", 1},
    {Family::burgers, "burgers", 1},     {Family::wave_b, "wave_b", 1},
    {Family::combined, "combined", 1},   {Family::wave2d, "wave2d", 2},
    {Family::vorticity2d, "vorticity2d", 2},
};

const FamilyInfo& info(Family f) {
  for (const auto& i : kFamilies)
    if (i.family == f) return i;
  throw std::invalid_argument("unknown family");
}

std::vector<ForcingMode> sample_forcing(Rng& rng) {
  std::vector<ForcingMode> modes(5);
  for (auto& m : modes) {
    m.amplitude = rng.uniform(-0.5, 0.5);
    m.omega = rng.uniform(-0.4, 0.4);
    m.ell = static_cast<int>(rng.uniform_int(1, 3));
    m.phase = rng.uniform(0.0, kTwoPi);
  }
  return modes;
}

double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

Boundary parse_boundary(const std::string& s) {
  if (s == "periodic") return Boundary::periodic;
  if (s == "dirichlet") return Boundary::dirichlet;
  if (s == "neumann") return Boundary::neumann;
  throw std::invalid_argument("unknown boundary '" + s + "'");
}

std::vector<double> sine_sum(Rng& rng, std::int64_t n, double length) {
  std::vector<double> u(static_cast<std::size_t>(n), 0.0);
  for (int j = 0; j < 5; ++j) {
    const double a = rng.uniform(-0.5, 0.5);
    const int ell = static_cast<int>(rng.uniform_int(1, 3));
    const double phi = rng.uniform(0.0, kTwoPi);
    for (std::int64_t i = 0; i < n; ++i) {
      const double x = length * static_cast<double>(i) / static_cast<double>(n);
      u[i] += a * std::sin(kTwoPi * ell * x / length + phi);
    }
  }
  return u;
}

std::vector<double> vorticity_ic(Rng& rng, int n) {
  constexpr double k0 = 10.0;
  RealFft fft({n, n});
  const int half = n / 2 + 1;
  std::vector<cplx> spec(fft.spectrum_size());
  for (int i = 0; i < n; ++i) {
    const int ky = i <= n / 2 ? i : i - n;
    for (int j = 0; j < half; ++j) {
      const double k = std::hypot(static_cast<double>(ky), static_cast<double>(j));
      const double phase = rng.uniform(0.0, kTwoPi);
      if (k == 0.0) continue;
      const double r = k / k0;
      const double energy = 4.0 / 3.0 * std::sqrt(std::numbers::pi) * std::pow(r, 4) / k0 * std::exp(-r * r);
      const double amp = std::sqrt(energy / (std::numbers::pi * k));
      spec[static_cast<std::size_t>(i * half + j)] = std::polar(amp, phase);
    }
  }
  std::vector<double> w(fft.real_size());
  fft.inverse(spec.data(), w.data());
  double mean = 0;
  for (double v : w) mean += v;
  mean /= static_cast<double>(w.size());
  double ms = 0;
  for (double& v : w) {
    v -= mean;
    ms += v * v;
  }
  const double scale = 1.0 / std::sqrt(ms / static_cast<double>(w.size()));
  for (double& v : w) v *= scale;
  return w;
}

}  // namespace

std::string family_name(Family f) { return info(f).name; }

Family parse_family(std::string_view name) {
  for (const auto& i : kFamilies)
    if (name == i.name) return i.family;
  throw std::invalid_argument("unknown family '" + std::string(name) + "'");
}

int spatial_dims(Family f) { return info(f).dims; }

const std::vector<Family>& all_families() {
  static const std::vector<Family> v = [] {
    std::vector<Family> out;
    for (const auto& i : kFamilies) out.push_back(i.family);
    return out;
  }();
  return v;
}

std::string boundary_name(Boundary b) {
  switch (b) {
    case Boundary::periodic: return "periodic";
    case Boundary::dirichlet: return "dirichlet";
    case Boundary::neumann: return "neumann";
  }
  return "?";
}

double EnvironmentSpec::param(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) {
    throw std::invalid_argument(family_name(family) + " environment has no parameter '" + name + "'");
  }
  return it->second;
}

nlohmann::json EnvironmentSpec::to_json() const {
  nlohmann::json f = nlohmann::json::array();
  for (const auto& m : forcing) {
    f.push_back({{"amplitude", m.amplitude}, {"omega", m.omega}, {"ell", m.ell}, {"phase", m.phase}});
  }
  return {{"family", family_name(family)},
          {"env_index", env_index},
          {"env_seed", env_seed},
          {"params", params},
          {"boundary", {boundary_name(left), boundary_name(right)}},
          {"forcing", f}};
}

EnvironmentSpec EnvironmentSpec::from_json(const nlohmann::json& j) {
  EnvironmentSpec e;
  e.family = parse_family(j.at("family").get<std::string>());
  e.env_index = j.at("env_index").get<std::int64_t>();
  e.env_seed = j.at("env_seed").get<std::uint64_t>();
  e.params = j.at("params").get<std::map<std::string, double>>();
  e.left = parse_boundary(j.at("boundary").at(0).get<std::string>());
  e.right = parse_boundary(j.at("boundary").at(1).get<std::string>());
  for (const auto& m : j.at("forcing")) {
    e.forcing.push_back({m.at("amplitude").get<double>(), m.at("omega").get<double>(),
                         m.at("ell").get<int>(), m.at("phase").get<double>()});
  }
  return e;
}

std::int64_t DatasetProfile::n_envs() const {
  return test_traj_start > 0 ? n_train_envs : n_train_envs + n_test_envs;
}

std::int64_t DatasetProfile::stored_traj_per_env() const {
  return test_traj_start > 0 ? traj_per_env : std::max(traj_per_env, test_traj_per_env);
}

std::int64_t DatasetProfile::frame_size() const {
  std::int64_t n = 1;
  for (auto g : grid) n *= g;
  return n;
}

nlohmann::json DatasetProfile::to_json() const {
  return {{"name", name},
          {"n_train_envs", n_train_envs},
          {"n_test_envs", n_test_envs},
          {"traj_per_env", traj_per_env},
          {"test_traj_start", test_traj_start},
          {"test_traj_per_env", test_traj_per_env},
          {"frames", frames},
          {"grid", grid},
          {"t_final", t_final},
          {"length", length}};
}

DatasetProfile DatasetProfile::from_json(const nlohmann::json& j) {
  DatasetProfile p;
  p.name = j.at("name").get<std::string>();
  p.n_train_envs = j.at("n_train_envs").get<std::int64_t>();
  p.n_test_envs = j.at("n_test_envs").get<std::int64_t>();
  p.traj_per_env = j.at("traj_per_env").get<std::int64_t>();
  p.test_traj_start = j.at("test_traj_start").get<std::int64_t>();
  p.test_traj_per_env = j.value("test_traj_per_env", std::int64_t{0});
  p.frames = j.at("frames").get<std::int64_t>();
  p.grid = j.at("grid").get<std::vector<std::int64_t>>();
  p.t_final = j.at("t_final").get<double>();
  p.length = j.at("length").get<double>();
  return p;
}

DatasetProfile make_profile(Family f, std::string_view name) {
  DatasetProfile p;
  p.name = std::string(name);
  switch (f) {
    case Family::advection: p.frames = 14; p.grid = {256}; p.t_final = 100.0; p.length = 128.0; break;
    case Family::heat:
    case Family::burgers: p.frames = 25; p.grid = {256}; p.t_final = 4.0; p.length = 16.0; break;
    case Family::combined: p.frames = 14; p.grid = {256}; p.t_final = 10.0; p.length = 16.0; break;
    case Family::wave_b: p.frames = 60; p.grid = {256}; p.t_final = 100.0; p.length = 16.0; break;
    case Family::vorticity2d: p.frames = 10; p.grid = {64, 64}; p.t_final = 2.0; p.length = kTwoPi; break;
    case Family::wave2d: p.frames = 10; p.grid = {64, 64}; p.t_final = 5e-3; p.length = 1.0; break;
  }
  const bool two_d = spatial_dims(f) == 2;
  if (name == "desk") {
    p.n_train_envs = 64;
    p.n_test_envs = 8;
    p.traj_per_env = 4;
    p.test_traj_per_env = 10;
  } else if (name == "paper") {
    p.n_train_envs = 1200;
    p.n_test_envs = two_d ? 120 : 12;
    p.traj_per_env = 10;
  } else if (name == "tiny") {
    p.n_train_envs = 4;
    p.n_test_envs = 2;
    p.traj_per_env = 3;
  } else {
    throw std::invalid_argument("unknown profile '" + std::string(name) + "' (desk, paper, tiny)");
  }
  if (f == Family::wave_b) {
    // Four boundary environments shared by both splits; test trajectories are
    // fresh initial conditions.
    p.n_train_envs = 4;
    p.n_test_envs = 4;
    p.test_traj_per_env = 0;
    p.traj_per_env = name == "paper" ? 3030 : name == "desk" ? 24 : 4;
    p.test_traj_start = name == "paper" ? 3000 : name == "desk" ? 20 : 3;
  }
  return p;
}

EnvironmentSpec sample_environment(Family f, std::int64_t env_index, std::uint64_t global_seed) {
  if (env_index < 0) throw std::invalid_argument("env_index must be >= 0");
  EnvironmentSpec e;
  e.family = f;
  e.env_index = env_index;
  e.env_seed = num::hash_seed({global_seed, num::hash_string(family_name(f)),
                               static_cast<std::uint64_t>(env_index)});
  Rng rng(e.env_seed);
  switch (f) {
    case Family::advection:
      e.params["beta"] = rng.uniform(0.0, 4.0);
      break;
    case Family::heat:
      e.params = {{"alpha", 0.0}, {"beta", log_uniform(rng, 1e-3, 5.0)}, {"gamma", 0.0}};
      e.forcing = sample_forcing(rng);
      break;
    case Family::burgers:
      e.params = {{"alpha", 0.5}, {"beta", log_uniform(rng, 1e-3, 5.0)}, {"gamma", 0.0}};
      e.forcing = sample_forcing(rng);
      break;
    case Family::combined:
      e.params["alpha"] = rng.uniform(0.0, 1.0);
      e.params["beta"] = rng.uniform(0.0, 0.4);
      e.params["gamma"] = rng.uniform(0.0, 1.0);
      break;
    case Family::wave_b: {
      e.params["c"] = 2.0;
      const int combo = static_cast<int>(env_index % 4);
      e.left = combo / 2 == 0 ? Boundary::dirichlet : Boundary::neumann;
      e.right = combo % 2 == 0 ? Boundary::dirichlet : Boundary::neumann;
      break;
    }
    case Family::vorticity2d:
      e.params["nu"] = rng.uniform(1e-3, 1e-2);
      break;
    case Family::wave2d:
      e.params["c"] = rng.uniform(0.0, 50.0);
      e.params["k"] = rng.uniform(100.0, 500.0);
      break;
  }
  return e;
}

std::vector<double> sample_initial_condition(const EnvironmentSpec& env, std::uint64_t ic_seed,
                                             const DatasetProfile& profile) {
  Rng rng(ic_seed);
  const std::int64_t n = profile.grid.at(0);
  switch (env.family) {
    case Family::advection:
    case Family::heat:
    case Family::burgers:
    case Family::combined:
      return sine_sum(rng, n, profile.length);
    case Family::wave_b: {
      const double center = rng.uniform(-5.0, 5.0);
      constexpr double sigma = 0.5;
      std::vector<double> u(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) {
        const double x = -8.0 + 16.0 * static_cast<double>(i) / static_cast<double>(n - 1);
        u[i] = std::exp(-(x - center) * (x - center) / (2 * sigma * sigma));
      }
      if (env.left == Boundary::dirichlet) u.front() = 0.0;
      if (env.right == Boundary::dirichlet) u.back() = 0.0;
      return u;
    }
    case Family::vorticity2d:
      return vorticity_ic(rng, static_cast<int>(n));
    case Family::wave2d: {
      const std::int64_t m = profile.grid.at(1);
      std::vector<double> w(static_cast<std::size_t>(n * m), 0.0);
      for (int g = 0; g < 5; ++g) {
        const double s = rng.uniform(0.025, 0.1);
        const double cx = rng.uniform(0.0, 1.0);
        const double cy = rng.uniform(0.0, 1.0);
        for (std::int64_t i = 0; i < n; ++i) {
          const double y = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
          for (std::int64_t j = 0; j < m; ++j) {
            const double x = (static_cast<double>(j) + 0.5) / static_cast<double>(m);
            w[i * m + j] += std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2 * s * s));
          }
        }
      }
      return w;
    }
  }
  throw std::invalid_argument("unsupported family");
}

}  // namespace zebra::pde
