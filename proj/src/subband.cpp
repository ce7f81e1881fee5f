// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dccrn/subband.hpp"

#include <random>

namespace dccrn {

using ad::Var;

void SubbandConfig::validate() const {
  if (bands == 0 || net_bins == 0 || net_bins % bands != 0)
    throw ShapeError("subband: " + std::to_string(net_bins) + " bins cannot be split into " +
                     std::to_string(bands) + " equal bands");
}

template <typename T>
ComplexVar<T> split_bands(const ComplexVar<T>& y, const Var<T>& a_re, const Var<T>& a_im,
                          const SubbandConfig& cfg) {
  cfg.validate();
  check_complex(y, "split_bands");
  const std::size_t K = cfg.bands, W = cfg.band_width();
  if (y.shape().size() != 3 || y.dim(2) != cfg.net_bins)
    throw ShapeError("split_bands: expected [B, T, " + std::to_string(cfg.net_bins) + "], got " +
                     shape_str(y.shape()));
  if (a_re.shape() != Shape{K, W, W} || a_im.shape() != Shape{K, W, W})
    throw ShapeError("split_bands: analysis filters must be " + shape_str({K, W, W}));
  const std::size_t B = y.dim(0), TT = y.dim(1);
  auto yr = ad::reshape(y.re, {B * TT, cfg.net_bins});
  auto yi = ad::reshape(y.im, {B * TT, cfg.net_bins});
  std::vector<Var<T>> re_parts, im_parts;
  for (std::size_t k = 0; k < K; ++k) {
    ComplexWeight<T> a{ad::reshape(ad::slice(a_re, 0, k, 1), {W, W}),
                       ad::reshape(ad::slice(a_im, 0, k, 1), {W, W}),
                       {},
                       {}};
    auto band = clp(ComplexVar<T>{ad::slice(yr, 1, k * W, W), ad::slice(yi, 1, k * W, W)}, a);
    re_parts.push_back(band.re);
    im_parts.push_back(band.im);
  }
  // [B*T, K*W] -> [B, K, T, W]
  auto arrange = [&](const std::vector<Var<T>>& parts) {
    return ad::permute(ad::reshape(ad::concat(parts, 1), {B, TT, K, W}), {0, 2, 1, 3});
  };
  return {arrange(re_parts), arrange(im_parts)};
}

template <typename T>
ComplexVar<T> merge_bands(const ComplexVar<T>& bands, const Var<T>& s_re, const Var<T>& s_im,
                          const SubbandConfig& cfg) {
  cfg.validate();
  check_complex(bands, "merge_bands");
  const std::size_t K = cfg.bands, W = cfg.band_width();
  if (bands.shape().size() != 4 || bands.dim(1) != K || bands.dim(3) != W)
    throw ShapeError("merge_bands: expected [B, " + std::to_string(K) + ", T, " +
                     std::to_string(W) + "], got " + shape_str(bands.shape()));
  const std::size_t B = bands.dim(0), TT = bands.dim(2);
  auto cat = [&](const Var<T>& v) {
    return ad::reshape(ad::permute(v, {0, 2, 1, 3}), {B, TT, cfg.net_bins});
  };
  return clp(ComplexVar<T>{cat(bands.re), cat(bands.im)}, ComplexWeight<T>{s_re, s_im, {}, {}});
}

template <typename T>
ComplexVar<T> normalize_bands(const ComplexVar<T>& bands, const BandNormWeights<T>& w,
                              ad::NormSpan span) {
  check_complex(bands, "normalize_bands");
  return {ad::instance_norm(bands.re, w.gamma_re, w.beta_re, span),
          ad::instance_norm(bands.im, w.gamma_im, w.beta_im, span)};
}

template <typename T>
void identity_init(Tensor<T>& re, Tensor<T>& im, std::uint64_t seed, double sigma) {
  if (re.rank() != 3 || re.dim(1) != re.dim(2) || re.shape() != im.shape())
    throw ShapeError("identity_init: expected [count, n, n], got " + shape_str(re.shape()));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  const std::size_t n = re.dim(1);
  for (std::size_t i = 0; i < re.size(); ++i) {
    const std::size_t r = (i / n) % n, c = i % n;
    re[i] = static_cast<T>((r == c ? 1.0 : 0.0) + noise(rng));
    im[i] = static_cast<T>(noise(rng));
  }
}

#define DCCRN_INSTANTIATE(T)                                                                 \
  template ComplexVar<T> split_bands<T>(const ComplexVar<T>&, const Var<T>&, const Var<T>&,  \
                                        const SubbandConfig&);                               \
  template ComplexVar<T> merge_bands<T>(const ComplexVar<T>&, const Var<T>&, const Var<T>&,  \
                                        const SubbandConfig&);                               \
  template ComplexVar<T> normalize_bands<T>(const ComplexVar<T>&, const BandNormWeights<T>&, \
                                            ad::NormSpan);                                   \
  template void identity_init<T>(Tensor<T>&, Tensor<T>&, std::uint64_t, double);

DCCRN_INSTANTIATE(float)
DCCRN_INSTANTIATE(double)

}  // namespace dccrn
