// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "zebra/num/rng.hpp"
#include "zebra/pde/environment.hpp"

namespace zebra::pde {

/// Transformations that map solutions of an environment to other solutions
/// of the same environment: circular shifts along periodic axes of unforced
/// equations, and negation of unforced linear equations.
struct Symmetries {
  std::vector<int> shift_axes;
  bool negate = false;

  bool any() const { return negate || !shift_axes.empty(); }
};

Symmetries symmetries(const EnvironmentSpec& env, int spatial_dims);

/// Applies a uniformly drawn element of `s` (identity included) to
/// `trajectory`, laid out [time, spatial...] with `grid` spatial extents.
void apply_random_symmetry(const Symmetries& s, std::span<const std::int64_t> grid, std::span<float> trajectory,
                           num::Rng& rng);

}  // namespace zebra::pde
