// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string_view>
#include <vector>

#include "zebra/num/checkpoint.hpp"
#include "zebra/num/tensor.hpp"
#include "zebra/pde/environment.hpp"
#include "zebra/vq/codebook.hpp"

namespace zebra::vq {

struct VqConfig {
  std::vector<std::int64_t> grid;  // spatial extents, 1 or 2 axes
  int compression = 16;            // per axis, power of two
  int start_hidden = 64;
  int max_hidden = 256;
  int num_codebooks = 2;
  int code_dim = 64;
  int codebook_size = 256;
  bool shared_codebook = true;
  double commitment = 0.25;
  double decay = 0.99;
  double eps = 1e-5;
  std::int64_t dead_code_steps = 2000;
  std::uint64_t seed = 0;

  int dims() const { return static_cast<int>(grid.size()); }
  int levels() const;
  std::int64_t positions() const;
  std::int64_t tokens_per_frame() const { return positions() * num_codebooks; }
  std::int64_t frame_size() const;
  int hidden(int level) const;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  static VqConfig from_json(const nlohmann::json& j);
};

/// Architecture preset for a family: "paper" follows the published sizes,
/// "desk" and "tiny" shrink widths for CPU runs.
VqConfig vq_preset(pde::Family family, std::string_view profile);

/// Continuous and quantized latents of one or more frames. Rows are ordered
/// (frame, position, slot), position row-major over the latent grid.
struct LatentGrid {
  std::int64_t frames = 0;
  std::int64_t positions = 0;
  int num_codebooks = 0;
  int dim = 0;
  std::vector<float> z;
  std::vector<float> zq;
  std::vector<std::int32_t> indices;

  std::int64_t rows() const { return frames * positions * num_codebooks; }
};

class VqModel {
 public:
  explicit VqModel(VqConfig config);

  const VqConfig& config() const { return config_; }
  Codebook& codebook() { return codebook_; }
  const Codebook& codebook() const { return codebook_; }

  std::vector<num::Tensor> parameters() const;
  num::NamedTensors named_parameters() const;

  /// frames [B, 1, grid...] (normalized) -> latent rows [B * P * nc, d].
  num::Tensor encode(const num::Tensor& frames) const;
  /// latent rows [B * P * nc, d] -> frames [B, 1, grid...].
  num::Tensor decode(const num::Tensor& rows, std::int64_t batch) const;

  /// Fills zq and indices of a grid whose z is set.
  void quantize(LatentGrid& grid) const;

  void save(const std::filesystem::path& dir, const nlohmann::json& extra) const;
  /// Returns the model; `meta` receives the manifest metadata when non-null.
  static VqModel load(const std::filesystem::path& dir, nlohmann::json* meta = nullptr);

 private:
  struct Conv {
    num::Tensor weight, bias;
  };
  struct ResBlock {
    Conv c1, c2;
    Conv skip;  // undefined when channels match
  };

  Conv make_conv(int in, int out, int kernel);
  ResBlock make_block(int in, int out);
  num::Tensor apply(const Conv& c, const num::Tensor& x, int stride, int pad) const;
  num::Tensor apply(const ResBlock& b, const num::Tensor& x) const;

  VqConfig config_;
  Codebook codebook_;
  num::Rng init_rng_;
  Conv enc_in_;
  std::vector<ResBlock> enc_blocks_;
  std::vector<Conv> enc_down_;
  ResBlock enc_mid_;
  Conv enc_head_;
  Conv dec_in_;
  ResBlock dec_mid_;
  std::vector<Conv> dec_up_;
  std::vector<ResBlock> dec_blocks_;
  Conv dec_out_;
};

struct VqLossTerms {
  num::Tensor total;
  double recon = 0;
  double commit = 0;
  std::int64_t zero_norm_frames = 0;
};

/// Mean over frames of |u - uhat| / |u| (absolute L2 for all-zero frames)
/// plus alpha * mean((z - stopgrad(zq))^2).
VqLossTerms vq_loss(const num::Tensor& u, const num::Tensor& uhat, const num::Tensor& z,
                    const num::Tensor& zq, double alpha);

}  // namespace zebra::vq
