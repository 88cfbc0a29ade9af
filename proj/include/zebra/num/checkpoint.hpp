// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "zebra/num/tensor.hpp"

namespace zebra::num {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Checkpoint directory: manifest.json (meta + tensor table) and weights.bin
/// (f32 LE, tensors back to back). Files are written to temporaries first and
/// renamed, so an interrupted save never clobbers the previous checkpoint.
void save_checkpoint(const std::filesystem::path& dir, const NamedTensors& tensors,
                     const nlohmann::json& meta);

struct Checkpoint {
  nlohmann::json meta;
  std::map<std::string, Tensor> tensors;

  const Tensor& at(const std::string& name) const;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Copies checkpoint values into `dst`, checking names and shapes.
void assign_tensors(const Checkpoint& ckpt, const NamedTensors& dst);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const void* data, std::size_t size);
std::vector<char> read_bytes(const std::filesystem::path& path);

}  // namespace zebra::num
