// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Learnable complex analysis/synthesis filterbank. The network spectrum of
// net_bins bins is cut into K contiguous, non-overlapping blocks of
// net_bins / K bins. Band k is the block times its own complex matrix A_k
// (block-diagonal analysis); the merged spectrum is the concatenation of the
// bands times one full complex matrix S.

#pragma once

#include "dccrn/complex.hpp"

namespace dccrn {

struct SubbandConfig {
  std::size_t bands = 4;
  std::size_t net_bins = 256;

  std::size_t band_width() const { return net_bins / bands; }
  void validate() const;
};

// y [B, T, net_bins], a [K, W, W] -> bands [B, K, T, W]:
//   band_k(t, f) = sum_g y(t, k*W + g) * A_k(g, f)
template <typename T>
ComplexVar<T> split_bands(const ComplexVar<T>& y, const ad::Var<T>& a_re, const ad::Var<T>& a_im,
                          const SubbandConfig& cfg);

// bands [B, K, T, W], s [net_bins, net_bins] -> [B, T, net_bins]:
//   out(t, f) = sum_g CAT(bands)(t, g) * S(g, f)
template <typename T>
ComplexVar<T> merge_bands(const ComplexVar<T>& bands, const ad::Var<T>& s_re,
                          const ad::Var<T>& s_im, const SubbandConfig& cfg);

// Instance normalization of every band, real and imaginary planes with their
// own statistics and affine parameters (gamma/beta [K] per plane).
template <typename T>
struct BandNormWeights {
  ad::Var<T> gamma_re, beta_re, gamma_im, beta_im;
};

template <typename T>
ComplexVar<T> normalize_bands(const ComplexVar<T>& bands, const BandNormWeights<T>& w,
                              ad::NormSpan span);

// Identity plus N(0, sigma^2) noise, stacked [count, n, n]; imaginary parts
// get the noise only.
template <typename T>
void identity_init(Tensor<T>& re, Tensor<T>& im, std::uint64_t seed, double sigma = 1e-3);

}  // namespace dccrn
