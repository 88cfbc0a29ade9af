// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <complex>
#include <cstdint>
#include <vector>

namespace zebra::pde {

using cplx = std::complex<double>;

/// Real-to-complex FFT of a fixed shape (1D: {n}, 2D: {ny, nx}). The
/// half-spectrum has n/2+1 entries along the last axis. inverse() is
/// normalized, so inverse(forward(x)) == x.
class RealFft {
 public:
  explicit RealFft(std::vector<int> shape);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t real_size() const { return real_size_; }
  std::size_t spectrum_size() const { return spectrum_size_; }

  void forward(const double* in, cplx* out);
  /// `in` is used as scratch and destroyed.
  void inverse(cplx* in, double* out);

 private:
  std::vector<int> shape_;
  std::size_t real_size_;
  std::size_t spectrum_size_;
  std::vector<double> rbuf_;
  std::vector<cplx> cbuf_;
  void* plan_fwd_;
  void* plan_inv_;
};

}  // namespace zebra::pde
