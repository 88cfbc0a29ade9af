// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/pde/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>
#include <stdexcept>

namespace zebra::pde {

namespace {
// FFTW's planner is not thread-safe; execution of distinct plans is.
std::mutex g_planner_mutex;
}  // namespace

RealFft::RealFft(std::vector<int> shape) : shape_(std::move(shape)) {
  if (shape_.empty() || shape_.size() > 2) throw std::invalid_argument("RealFft: 1D or 2D only");
  real_size_ = 1;
  for (int n : shape_) real_size_ *= static_cast<std::size_t>(n);
  spectrum_size_ = real_size_ / static_cast<std::size_t>(shape_.back()) *
                   (static_cast<std::size_t>(shape_.back()) / 2 + 1);
  rbuf_.resize(real_size_);
  cbuf_.resize(spectrum_size_);
  auto* c = reinterpret_cast<fftw_complex*>(cbuf_.data());
  std::lock_guard lock(g_planner_mutex);
  const unsigned flags = FFTW_ESTIMATE;
  if (shape_.size() == 1) {
    plan_fwd_ = fftw_plan_dft_r2c_1d(shape_[0], rbuf_.data(), c, flags);
    plan_inv_ = fftw_plan_dft_c2r_1d(shape_[0], c, rbuf_.data(), flags);
  } else {
    plan_fwd_ = fftw_plan_dft_r2c_2d(shape_[0], shape_[1], rbuf_.data(), c, flags);
    plan_inv_ = fftw_plan_dft_c2r_2d(shape_[0], shape_[1], c, rbuf_.data(), flags);
  }
  if (!plan_fwd_ || !plan_inv_) throw std::runtime_error("RealFft: FFTW planning failed");
}

RealFft::~RealFft() {
  std::lock_guard lock(g_planner_mutex);
  fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
  fftw_destroy_plan(static_cast<fftw_plan>(plan_inv_));
}

void RealFft::forward(const double* in, cplx* out) {
  std::copy_n(in, real_size_, rbuf_.data());
  fftw_execute(static_cast<fftw_plan>(plan_fwd_));
  std::copy_n(cbuf_.data(), spectrum_size_, out);
}

void RealFft::inverse(cplx* in, double* out) {
  std::copy_n(in, spectrum_size_, cbuf_.data());
  fftw_execute(static_cast<fftw_plan>(plan_inv_));
  const double norm = 1.0 / static_cast<double>(real_size_);
  for (std::size_t i = 0; i < real_size_; ++i) out[i] = rbuf_[i] * norm;
}

}  // namespace zebra::pde
