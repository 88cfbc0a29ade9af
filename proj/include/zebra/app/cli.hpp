// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace zebra::app {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2 };

/// Runs one subcommand: gen-data, train-vqvae, train-lm, infer, eval, uq,
/// analyze-gen or selftest. Returns 0 on success, 1 on a runtime failure and
/// 2 on bad flags or an invalid config.
int dispatch(int argc, const char* const* argv);
int dispatch(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace zebra::app
