// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/num/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace zebra::num {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace fs = std::filesystem;

namespace {

void write_atomic(const fs::path& path, const void* data, std::size_t size) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

}  // namespace

void write_bytes(const fs::path& path, const void* data, std::size_t size) {
  write_atomic(path, data, size);
}

std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  std::vector<char> buf(size);
  in.seekg(0);
  in.read(buf.data(), static_cast<std::streamsize>(size));
  if (!in) throw IoError("read failed: " + path.string());
  return buf;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  const std::string text = j.dump(2) + "\n";
  write_atomic(path, text.data(), text.size());
}

nlohmann::json read_json(const fs::path& path) {
  const auto bytes = read_bytes(path);
  try {
    return nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void save_checkpoint(const fs::path& dir, const NamedTensors& tensors, const nlohmann::json& meta) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<char> blob;
  nlohmann::json table = nlohmann::json::array();
  for (const auto& [name, t] : tensors) {
    const std::size_t bytes = static_cast<std::size_t>(t.numel()) * sizeof(float);
    table.push_back({{"name", name},
                     {"dtype", "f32"},
                     {"shape", t.shape()},
                     {"offset", blob.size()},
                     {"nbytes", bytes}});
    const auto old = blob.size();
    blob.resize(old + bytes);
    if (bytes) std::memcpy(blob.data() + old, t.data().data(), bytes);
  }
  write_atomic(dir / "weights.bin", blob.data(), blob.size());
  write_json(dir / "manifest.json", {{"format", "zebra-checkpoint-1"}, {"meta", meta}, {"tensors", table}});
}

const Tensor& Checkpoint::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw IoError("checkpoint has no tensor '" + name + "'");
  return it->second;
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const auto manifest = read_json(dir / "manifest.json");
  if (manifest.value("format", "") != "zebra-checkpoint-1") {
    throw IoError(dir.string() + ": unrecognized checkpoint format");
  }
  const auto blob = read_bytes(dir / "weights.bin");
  Checkpoint ck;
  ck.meta = manifest.at("meta");
  for (const auto& e : manifest.at("tensors")) {
    const auto name = e.at("name").get<std::string>();
    if (e.at("dtype") != "f32") throw IoError(name + ": unsupported dtype");
    Shape shape = e.at("shape").get<Shape>();
    const auto offset = e.at("offset").get<std::size_t>();
    const auto nbytes = e.at("nbytes").get<std::size_t>();
    if (nbytes != static_cast<std::size_t>(numel(shape)) * sizeof(float) || offset + nbytes > blob.size()) {
      throw IoError(dir.string() + ": tensor '" + name + "' has inconsistent extent");
    }
    std::vector<float> values(nbytes / sizeof(float));
    if (nbytes) std::memcpy(values.data(), blob.data() + offset, nbytes);
    ck.tensors.emplace(name, Tensor(std::move(shape), std::move(values)));
  }
  return ck;
}

void assign_tensors(const Checkpoint& ckpt, const NamedTensors& dst) {
  for (const auto& [name, t] : dst) {
    const Tensor& src = ckpt.at(name);
    if (src.shape() != t.shape()) {
      throw IoError("checkpoint tensor '" + name + "' has shape " + to_string(src.shape()) +
                    ", model expects " + to_string(t.shape()));
    }
    Tensor target = t;
    auto out = target.data();
    std::copy(src.data().begin(), src.data().end(), out.begin());
  }
}

}  // namespace zebra::num
