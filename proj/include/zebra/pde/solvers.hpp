// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "zebra/pde/environment.hpp"

namespace zebra::pde {

/// Dense space-time field, frames of `frame_size` values each. Stored frame
/// j sits at time j * t_final / (frames - 1).
struct Trajectory {
  std::int64_t frames = 0;
  std::int64_t frame_size = 0;
  std::vector<double> values;
  double dt_snapshot = 0;
  double dx = 0;
  std::uint64_t ic_seed = 0;

  const double* frame(std::int64_t t) const { return values.data() + t * frame_size; }
  double* frame(std::int64_t t) { return values.data() + t * frame_size; }
};

class UnstableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Trajectory solve_advection(const EnvironmentSpec& env, const std::vector<double>& u0,
                           const DatasetProfile& profile);

struct SpectralOptions {
  double rtol = 1e-6;
  double atol = 1e-6;
  double blowup = 1e6;
};

/// u_t = -2 alpha u u_x + beta u_xx - gamma u_xxx + forcing on a periodic
/// domain (covers combined, heat and burgers).
Trajectory solve_combined(const EnvironmentSpec& env, const std::vector<double>& u0,
                          const DatasetProfile& profile, const SpectralOptions& opt = {});

struct Wave1dOptions {
  double cfl = 0.5;
};

/// Leapfrog on x in [-8, 8] with nodes at both endpoints.
Trajectory solve_wave1d_boundary(const EnvironmentSpec& env, const std::vector<double>& u0,
                                 const DatasetProfile& profile, const Wave1dOptions& opt = {},
                                 std::vector<double>* energy = nullptr);

/// Vorticity form of 2D incompressible Navier-Stokes on [0, L)^2, RK4.
Trajectory solve_vorticity2d(const EnvironmentSpec& env, const std::vector<double>& w0,
                             const DatasetProfile& profile, double max_dt = 1e-3);

/// Damped wave equation on [0,1]^2 with zero-flux walls, RK4 on (w, w_t).
Trajectory solve_wave2d(const EnvironmentSpec& env, const std::vector<double>& w0,
                        const DatasetProfile& profile, double max_dt = 6.25e-6,
                        std::vector<double>* energy = nullptr);

Trajectory solve(const EnvironmentSpec& env, const std::vector<double>& u0,
                 const DatasetProfile& profile);

/// Samples an IC and solves; unstable solutions are retried with a fresh
/// ic seed (up to 20 attempts).
Trajectory generate_trajectory(const EnvironmentSpec& env, const DatasetProfile& profile,
                               std::uint64_t global_seed, std::int64_t traj_index);

// Discrete operators, exposed for the oracle tests.

/// Arakawa's energy- and enstrophy-conserving Jacobian J(psi, w) on a
/// periodic n x n grid with spacing h.
void arakawa_jacobian(const double* psi, const double* w, double* out, int n, double h);
/// 5-point Laplacian, periodic.
void laplacian5(const double* u, double* out, int n, double h);

/// Solves lap5(psi) = -w exactly in the discrete sense (zero-mean part).
class PoissonSolver {
 public:
  PoissonSolver(int n, double h);
  ~PoissonSolver();
  void solve(const double* w, double* psi);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// (energy, enstrophy) with energy = 1/2 sum psi w h^2, enstrophy = 1/2 sum w^2 h^2.
std::pair<double, double> vorticity_invariants(const std::vector<double>& w, int n, double h);

}  // namespace zebra::pde
