// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace zebra::app {

using Rgb = std::array<std::uint8_t, 3>;

struct Series {
  std::vector<double> x;
  std::vector<double> y;
  Rgb color{31, 119, 180};
  bool markers = false;  // points only, no connecting line
};

/// Palette used when plotting several series.
Rgb palette(std::size_t i);

/// Minimal 8-bit RGB PNG encoder (zlib deflate, one IDAT chunk).
void write_png(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& rgb);

/// Line plot on auto-scaled axes with light grid lines and no text; the CSV
/// next to it carries the numbers. Non-finite points are skipped.
void write_line_plot(const std::filesystem::path& path, const std::vector<Series>& series, int width = 640,
                     int height = 400);

}  // namespace zebra::app
