// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/app/cli.hpp"

int main(int argc, char** argv) { return zebra::app::dispatch(argc, argv); }
