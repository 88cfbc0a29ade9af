// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/pde/symmetry.hpp"

#include <algorithm>
#include <stdexcept>

namespace zebra::pde {

Symmetries symmetries(const EnvironmentSpec& env, int spatial_dims) {
  Symmetries s;
  if (!env.forcing.empty()) return s;
  bool periodic = false, linear = false;
  switch (env.family) {
    case Family::advection:
    case Family::heat:
      periodic = linear = true;
      break;
    case Family::burgers:
    case Family::combined:
    case Family::vorticity2d:
      periodic = true;
      break;
    case Family::wave_b:
    case Family::wave2d:
      linear = true;
      break;
  }
  periodic = periodic && env.left == Boundary::periodic && env.right == Boundary::periodic;
  if (periodic)
    for (int a = 0; a < spatial_dims; ++a) s.shift_axes.push_back(a);
  s.negate = linear;
  return s;
}

void apply_random_symmetry(const Symmetries& s, std::span<const std::int64_t> grid, std::span<float> trajectory,
                           num::Rng& rng) {
  std::int64_t frame = 1;
  for (auto n : grid) frame *= n;
  if (frame <= 0 || trajectory.size() % static_cast<std::size_t>(frame) != 0)
    throw std::invalid_argument("apply_random_symmetry: trajectory is not a whole number of frames");
  const auto frames = static_cast<std::int64_t>(trajectory.size()) / frame;

  for (int axis : s.shift_axes) {
    if (axis < 0 || axis >= static_cast<int>(grid.size())) throw std::invalid_argument("shift axis out of range");
    const std::int64_t n = grid[static_cast<std::size_t>(axis)];
    const std::int64_t shift = rng.uniform_int(0, n - 1);
    if (shift == 0) continue;
    std::int64_t inner = 1;
    for (std::size_t a = static_cast<std::size_t>(axis) + 1; a < grid.size(); ++a) inner *= grid[a];
    const std::int64_t outer = frames * frame / (n * inner);
    // Rotating a block of n * inner values by shift * inner shifts the axis.
    for (std::int64_t o = 0; o < outer; ++o) {
      auto* begin = trajectory.data() + o * n * inner;
      std::rotate(begin, begin + (n - shift) * inner, begin + n * inner);
    }
  }
  if (s.negate && rng.uniform_int(0, 1) == 1)
    for (auto& v : trajectory) v = -v;
}

}  // namespace zebra::pde
