// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/num/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "zebra/num/ops.hpp"
#include "zebra/num/rng.hpp"

namespace zebra::num {

GradCheckResult check_gradients(const ScalarFn& f, const std::vector<Tensor64>& inputs, double h,
                                double floor) {
  std::vector<Tensor64> leaves;
  for (const auto& in : inputs) leaves.emplace_back(in.shape(), std::vector<double>(in.data().begin(), in.data().end()), true);
  auto loss = f(leaves);
  backward(loss);

  std::vector<Tensor64> probe_in;
  for (const auto& in : inputs) probe_in.push_back(in.detach());
  NoGradGuard guard;
  GradCheckResult r;
  for (std::size_t i = 0; i < probe_in.size(); ++i) {
    auto values = probe_in[i].data();
    for (std::int64_t j = 0; j < probe_in[i].numel(); ++j) {
      const double saved = values[j];
      values[j] = saved + h;
      const double up = f(probe_in).item();
      values[j] = saved - h;
      const double down = f(probe_in).item();
      values[j] = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = leaves[i].has_grad() ? leaves[i].grad()[j] : 0.0;
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      const double err = std::abs(analytic - numeric) / denom;
      if (err > r.max_rel_err || (i == 0 && j == 0)) {
        r = {err, i, j, analytic, numeric};
      }
    }
  }
  return r;
}

Tensor64 random_tensor(const Shape& shape, std::uint64_t seed, double scale) {
  Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor64(shape, std::move(v));
}

Tensor64 probe(const Tensor64& x, std::uint64_t seed) {
  return sum(mul(x, random_tensor(x.shape(), seed)));
}

}  // namespace zebra::num
