// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Thin FFTW wrapper: unnormalized real-to-half-complex transforms of one size.

#pragma once

#include <cstddef>
#include <vector>

namespace dccrn::detail {

template <typename T>
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  // in: n reals -> re/im: n/2+1 bins each.
  void forward(const T* in, T* re, T* im) const;
  // re/im: n/2+1 bins -> out: n reals, scaled by 1 (caller divides by n).
  void inverse(const T* re, const T* im, T* out) const;

 private:
  std::size_t n_;
  void* forward_plan_ = nullptr;
  void* inverse_plan_ = nullptr;
};

}  // namespace dccrn::detail
