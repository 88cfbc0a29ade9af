// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/vq/codebook.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace zebra::vq {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double exact_distance(const float* a, const float* b, int d) {
  double acc = 0.0;
  for (int i = 0; i < d; ++i) {
    const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += diff * diff;
  }
  return acc;
}

}  // namespace

Codebook::Codebook(int size, int dim, double decay, double eps, std::int64_t dead_after)
    : size_(size), dim_(dim), decay_(decay), eps_(eps), dead_after_(dead_after) {
  if (size <= 0 || dim <= 0) throw std::invalid_argument("codebook size and dim must be positive");
  if (decay < 0.0 || decay > 1.0) throw std::invalid_argument("codebook decay must lie in [0, 1]");
  entries_.assign(static_cast<std::size_t>(size) * dim, 0.0f);
  num::Rng rng(static_cast<std::uint64_t>(size) * 1000003u + dim);
  for (auto& v : entries_) v = static_cast<float>(rng.normal());
  set_entries(entries_);
}

std::vector<double> Codebook::smoothed_counts() const {
  const double n = std::accumulate(cluster_size_.begin(), cluster_size_.end(), 0.0);
  std::vector<double> out(cluster_size_.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = (cluster_size_[k] + eps_) / (n + size_ * eps_) * n;
  return out;
}

void Codebook::set_entries(std::span<const float> values) {
  if (values.size() != entries_.size()) throw std::invalid_argument("codebook entries have the wrong size");
  std::copy(values.begin(), values.end(), entries_.begin());
  cluster_size_.assign(size_, 1.0);
  const auto smooth = smoothed_counts();
  embed_sum_.resize(entries_.size());
  for (int k = 0; k < size_; ++k)
    for (int i = 0; i < dim_; ++i) embed_sum_[k * dim_ + i] = static_cast<double>(entries_[k * dim_ + i]) * smooth[k];
  last_used_.assign(size_, updates_);
  hit_.assign(size_, 0);
}

void Codebook::set_state(std::span<const float> entries, std::span<const float> cluster_size,
                         std::span<const float> embed_sum) {
  if (entries.size() != entries_.size() || cluster_size.size() != cluster_size_.size() ||
      embed_sum.size() != entries_.size()) {
    throw std::invalid_argument("codebook state has the wrong size");
  }
  std::copy(entries.begin(), entries.end(), entries_.begin());
  std::copy(cluster_size.begin(), cluster_size.end(), cluster_size_.begin());
  std::copy(embed_sum.begin(), embed_sum.end(), embed_sum_.begin());
  last_used_.assign(size_, updates_);
  hit_.assign(size_, 0);
}

void Codebook::init_from(const float* z, std::int64_t n, num::Rng& rng) {
  if (n <= 0) throw std::invalid_argument("codebook init needs at least one latent");
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (std::int64_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);
  std::vector<float> values(entries_.size());
  for (int k = 0; k < size_; ++k) {
    const std::int64_t row = k < n ? order[k] : rng.uniform_int(0, n - 1);
    std::copy(z + row * dim_, z + (row + 1) * dim_, values.begin() + static_cast<std::ptrdiff_t>(k) * dim_);
  }
  set_entries(values);
}

void Codebook::quantize(const float* z, std::int64_t n, std::int32_t* out) const {
  if (n == 0) return;
  Eigen::Map<const RowMat> Z(z, n, dim_);
  Eigen::Map<const RowMat> E(entries_.data(), size_, dim_);
  const Eigen::VectorXf e_norm = E.rowwise().squaredNorm();
  const float e_max = e_norm.maxCoeff();
  constexpr std::int64_t kChunk = 256;
  RowMat dots;
  std::vector<int> candidates;
  for (std::int64_t r0 = 0; r0 < n; r0 += kChunk) {
    const std::int64_t rows = std::min(kChunk, n - r0);
    dots.noalias() = Z.middleRows(r0, rows) * E.transpose();
    for (std::int64_t r = 0; r < rows; ++r) {
      const float* zr = z + (r0 + r) * dim_;
      // The GEMM form drops |z|^2 and is only accurate to float rounding, so
      // every entry within a tolerance of the best is rechecked exactly.
      float best = e_norm[0] - 2.0f * dots(r, 0);
      for (int k = 1; k < size_; ++k) best = std::min(best, e_norm[k] - 2.0f * dots(r, k));
      const float z_norm = Eigen::Map<const Eigen::VectorXf>(zr, dim_).squaredNorm();
      const float tol = 1e-4f * (z_norm + e_max) + 1e-30f;
      candidates.clear();
      for (int k = 0; k < size_; ++k)
        if (e_norm[k] - 2.0f * dots(r, k) <= best + tol) candidates.push_back(k);
      int pick = candidates.front();
      double pick_d = exact_distance(zr, entry(pick), dim_);
      for (std::size_t c = 1; c < candidates.size(); ++c) {
        const double d = exact_distance(zr, entry(candidates[c]), dim_);
        if (d < pick_d) {
          pick_d = d;
          pick = candidates[c];
        }
      }
      out[r0 + r] = pick;
    }
  }
}

void Codebook::gather(std::span<const std::int32_t> ids, float* out) const {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::int32_t k = ids[i];
    if (k < 0 || k >= size_) {
      throw std::out_of_range("token id " + std::to_string(k) + " at position " + std::to_string(i) +
                              " is not a codebook index (K=" + std::to_string(size_) + ")");
    }
    std::copy(entry(k), entry(k) + dim_, out + i * dim_);
  }
}

void Codebook::refresh_entries() {
  const auto smooth = smoothed_counts();
  for (int k = 0; k < size_; ++k)
    for (int i = 0; i < dim_; ++i)
      entries_[k * dim_ + i] = static_cast<float>(embed_sum_[k * dim_ + i] / smooth[k]);
}

void Codebook::ema_update(const float* z, const std::int32_t* ids, std::int64_t n, num::Rng& rng) {
  ++updates_;
  std::vector<double> count(size_, 0.0);
  std::vector<double> sums(entries_.size(), 0.0);
  for (std::int64_t r = 0; r < n; ++r) {
    const int k = ids[r];
    count[k] += 1.0;
    for (int i = 0; i < dim_; ++i) sums[k * dim_ + i] += z[r * dim_ + i];
    last_used_[k] = updates_;
    hit_[k] = 1;
  }
  for (int k = 0; k < size_; ++k) {
    cluster_size_[k] = decay_ * cluster_size_[k] + (1.0 - decay_) * count[k];
    for (int i = 0; i < dim_; ++i)
      embed_sum_[k * dim_ + i] = decay_ * embed_sum_[k * dim_ + i] + (1.0 - decay_) * sums[k * dim_ + i];
  }
  refresh_entries();
  if (n == 0 || dead_after_ <= 0) return;
  const auto smooth = smoothed_counts();
  for (int k = 0; k < size_; ++k) {
    if (updates_ - last_used_[k] < dead_after_) continue;
    const std::int64_t row = rng.uniform_int(0, n - 1);
    for (int i = 0; i < dim_; ++i) {
      entries_[k * dim_ + i] = z[row * dim_ + i];
      embed_sum_[k * dim_ + i] = static_cast<double>(z[row * dim_ + i]) * smooth[k];
    }
    last_used_[k] = updates_;
    ++reseeded_;
  }
}

double Codebook::usage() const {
  return static_cast<double>(std::count(hit_.begin(), hit_.end(), 1)) / size_;
}

void Codebook::reset_usage() { std::fill(hit_.begin(), hit_.end(), 0); }

}  // namespace zebra::vq
