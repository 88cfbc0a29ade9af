// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

namespace zebra::app {

/// One oracle comparison: `value` is the measured error (or count) and the
/// check passes when it satisfies the pinned bound.
struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0;
  double bound = 0;
  std::string detail;
};

struct CheckGroup {
  std::string name;
  std::vector<CheckResult> checks;
  double seconds = 0;

  bool passed() const;
  /// Largest value / bound ratio among checks with a nonzero bound.
  const CheckResult* worst() const;
};

/// Central-difference gradient checks of every differentiable op and of
/// composite graphs, f64, h = 1e-5, bound 1e-4.
CheckGroup gradient_oracles();
/// Analytic solver references: advection characteristics, heat eigenmode,
/// inviscid Arakawa invariants, boundary conditions, Poisson round trip.
CheckGroup solver_oracles();
/// Tokenizer, sequence build/parse and pack/unpack inverses.
CheckGroup round_trip_oracles();
/// Sequence length law and the context budget of the 1D preset.
CheckGroup token_arithmetic();
/// Causality, cached decoding and the initial loss of the desk transformer.
CheckGroup transformer_invariants();

struct SelftestEntry {
  std::string name;
  std::function<CheckGroup()> run;
};

const std::vector<SelftestEntry>& selftest_groups();

}  // namespace zebra::app
