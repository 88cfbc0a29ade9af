// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "zebra/num/tensor.hpp"

namespace zebra::num {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t worst_input = 0;
  std::int64_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

using ScalarFn = std::function<Tensor64(const std::vector<Tensor64>&)>;

/// Compares reverse-mode gradients of a scalar function against central
/// differences. Per-entry error is |a - n| / max(|a|, |n|, floor).
GradCheckResult check_gradients(const ScalarFn& f, const std::vector<Tensor64>& inputs,
                                double h = 1e-5, double floor = 1e-6);

/// Random N(0,1) tensor from a seed.
Tensor64 random_tensor(const Shape& shape, std::uint64_t seed, double scale = 1.0);

/// sum(x * w) with a fixed pseudo-random w, turning any op into a scalar
/// with a generic upstream gradient.
Tensor64 probe(const Tensor64& x, std::uint64_t seed = 99);

}  // namespace zebra::num
