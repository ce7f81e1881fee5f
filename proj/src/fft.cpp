// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "fft.hpp"

#include <fftw3.h>

#include <mutex>

namespace dccrn::detail {
namespace {

// FFTW's planner is not re-entrant; execution on separate arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

constexpr unsigned kFlags = FFTW_ESTIMATE | FFTW_UNALIGNED;

}  // namespace

template <>
RealFft<double>::RealFft(std::size_t n) : n_(n) {
  std::lock_guard lock(planner_mutex());
  std::vector<double> in(n);
  std::vector<fftw_complex> out(n / 2 + 1);
  forward_plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), out.data(), kFlags);
  inverse_plan_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), out.data(), in.data(), kFlags);
}

template <>
RealFft<double>::~RealFft() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
}

template <>
void RealFft<double>::forward(const double* in, double* re, double* im) const {
  std::vector<double> buf(in, in + n_);
  std::vector<fftw_complex> out(bins());
  fftw_execute_dft_r2c(static_cast<fftw_plan>(forward_plan_), buf.data(), out.data());
  for (std::size_t k = 0; k < bins(); ++k) {
    re[k] = out[k][0];
    im[k] = out[k][1];
  }
}

template <>
void RealFft<double>::inverse(const double* re, const double* im, double* out) const {
  std::vector<fftw_complex> in(bins());
  for (std::size_t k = 0; k < bins(); ++k) {
    in[k][0] = re[k];
    in[k][1] = im[k];
  }
  fftw_execute_dft_c2r(static_cast<fftw_plan>(inverse_plan_), in.data(), out);
}

template <>
RealFft<float>::RealFft(std::size_t n) : n_(n) {
  std::lock_guard lock(planner_mutex());
  std::vector<float> in(n);
  std::vector<fftwf_complex> out(n / 2 + 1);
  forward_plan_ = fftwf_plan_dft_r2c_1d(static_cast<int>(n), in.data(), out.data(), kFlags);
  inverse_plan_ = fftwf_plan_dft_c2r_1d(static_cast<int>(n), out.data(), in.data(), kFlags);
}

template <>
RealFft<float>::~RealFft() {
  std::lock_guard lock(planner_mutex());
  fftwf_destroy_plan(static_cast<fftwf_plan>(forward_plan_));
  fftwf_destroy_plan(static_cast<fftwf_plan>(inverse_plan_));
}

template <>
void RealFft<float>::forward(const float* in, float* re, float* im) const {
  std::vector<float> buf(in, in + n_);
  std::vector<fftwf_complex> out(bins());
  fftwf_execute_dft_r2c(static_cast<fftwf_plan>(forward_plan_), buf.data(), out.data());
  for (std::size_t k = 0; k < bins(); ++k) {
    re[k] = out[k][0];
    im[k] = out[k][1];
  }
}

template <>
void RealFft<float>::inverse(const float* re, const float* im, float* out) const {
  std::vector<fftwf_complex> in(bins());
  for (std::size_t k = 0; k < bins(); ++k) {
    in[k][0] = re[k];
    in[k][1] = im[k];
  }
  fftwf_execute_dft_c2r(static_cast<fftwf_plan>(inverse_plan_), in.data(), out);
}

}  // namespace dccrn::detail
