// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dccrn/postproc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

namespace dccrn::postproc {

double expint_e1(double v) {
  if (!(v > 0)) throw NumericError("expint_e1: argument must be positive");
  if (v < 1.0) {
    // E1(v) = -gamma_E - ln v - sum_{k>=1} (-v)^k / (k k!)
    double term = 1.0, sum = 0.0;
    for (int k = 1; k < 100; ++k) {
      term *= -v / k;
      const double add = term / k;
      sum += add;
      if (std::abs(add) < 1e-17 * std::abs(sum)) break;
    }
    return -std::numbers::egamma - std::log(v) - sum;
  }
  // Modified Lentz evaluation of exp(-v) / (v + 1 - 1 / (v + 3 - 4 / (v + 5 - ...))).
  constexpr double tiny = 1e-300;
  double b = v + 1.0, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 1000; ++i) {
    const double a = -static_cast<double>(i) * i;
    b += 2.0;
    d = 1.0 / (a * d + b);
    c = b + a / c;
    const double delta = c * d;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return h * std::exp(-v);
}

double mmse_lsa_gain(double xi, double gamma) {
  xi = std::max(xi, 0.0);
  gamma = std::max(gamma, kEps);
  const double ratio = xi / (1.0 + xi);
  const double v = ratio * gamma;
  if (!(v > 0)) return kGainFloor;
  const double g = ratio * std::exp(0.5 * expint_e1(v));
  if (!std::isfinite(g)) return 1.0;
  return std::clamp(g, kGainFloor, 1.0);
}

std::pair<double, double> SnrTrack::update(double var_xhat, double var_n, double var_y) {
  s_xhat_ += var_xhat;
  s_n_ += var_n;
  s_y_ += var_y;
  last_xhat_ = var_xhat;
  last_n_ = var_n;
  last_y_ = var_y;
  ++count_;
  const double n = std::max(cum_n(), kEps);
  return {std::max(cum_xhat() / n, kEps), std::max(cum_y() / n, kEps)};
}

bool SnrTrack::maybe_reset(double xi) {
  bool reset = false;
  if (has_prev_) {
    const double r = (xi - prev_xi_) / prev_xi_;
    if (r > 1.0) {
      s_xhat_ = last_xhat_;
      s_n_ = last_n_;
      s_y_ = last_y_;
      count_ = 1;
      reset = true;
    }
  }
  prev_xi_ = std::max(xi, kEps);
  has_prev_ = true;
  return reset;
}

template <typename T>
double frame_variance(const T* re, const T* im, std::size_t n) {
  double s = 0;
  for (std::size_t f = 0; f < n; ++f)
    s += static_cast<double>(re[f]) * re[f] + static_cast<double>(im[f]) * im[f];
  return n ? s / static_cast<double>(n) : 0.0;
}

template <typename T>
FrameStats process_frame(SnrTrack& track, T* x_re, T* x_im, const T* y_re, const T* y_im,
                         std::size_t bins) {
  double vn = 0;
  for (std::size_t f = 0; f < bins; ++f) {
    const double nr = static_cast<double>(y_re[f]) - x_re[f];
    const double ni = static_cast<double>(y_im[f]) - x_im[f];
    vn += nr * nr + ni * ni;
  }
  vn /= static_cast<double>(bins);
  FrameStats s;
  std::tie(s.xi, s.gamma) =
      track.update(frame_variance(x_re, x_im, bins), vn, frame_variance(y_re, y_im, bins));
  s.gain = mmse_lsa_gain(s.xi, s.gamma);
  s.reset = track.maybe_reset(s.xi);
  const T g = static_cast<T>(s.gain);
  for (std::size_t f = 0; f < bins; ++f) {
    x_re[f] *= g;
    x_im[f] *= g;
  }
  return s;
}

template <typename T>
dsp::ComplexSpectrogram<T> apply_postproc(const dsp::ComplexSpectrogram<T>& xhat,
                                          const dsp::ComplexSpectrogram<T>& noisy,
                                          std::vector<FrameStats>* stats) {
  if (xhat.re.shape() != noisy.re.shape())
    throw ShapeError("apply_postproc: enhanced " + shape_str(xhat.re.shape()) + " and noisy " +
                     shape_str(noisy.re.shape()) + " differ");
  auto out = xhat;
  SnrTrack track;
  const std::size_t F = xhat.bins();
  if (stats) stats->clear();
  for (std::size_t t = 0; t < xhat.frames(); ++t) {
    auto s = process_frame(track, out.re.ptr() + t * F, out.im.ptr() + t * F,
                           noisy.re.ptr() + t * F, noisy.im.ptr() + t * F, F);
    if (stats) stats->push_back(s);
  }
  return out;
}

#define DCCRN_INSTANTIATE(T)                                                                \
  template double frame_variance<T>(const T*, const T*, std::size_t);                       \
  template FrameStats process_frame<T>(SnrTrack&, T*, T*, const T*, const T*, std::size_t); \
  template dsp::ComplexSpectrogram<T> apply_postproc<T>(const dsp::ComplexSpectrogram<T>&,  \
                                                        const dsp::ComplexSpectrogram<T>&,  \
                                                        std::vector<FrameStats>*);

DCCRN_INSTANTIATE(float)
DCCRN_INSTANTIATE(double)

}  // namespace dccrn::postproc
