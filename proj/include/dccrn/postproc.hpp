// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Frame-level MMSE-LSA post-filter for the network output X^ given the noisy
// input Y. Per frame:
//
//   var(Z)   = mean over bins of |Z(t, f)|^2, with N^ = Y - X^
//   cum(Z)   = mean of var(Z) over frames since the last reset
//   xi'      = cum(X^) / cum(N^),   gamma = cum(Y) / cum(N^)
//   v        = xi' gamma / (1 + xi')
//   G        = xi' / (1 + xi') * exp(E1(v) / 2), clamped to [G_min, 1]
//   r        = (xi'(t) - xi'(t-1)) / xi'(t-1); r > 1 restarts the cumulative
//              means from the current frame.
//
// Every bin of frame t is scaled by G(t).

#pragma once

#include <cstddef>
#include <vector>

#include "dccrn/dsp.hpp"

namespace dccrn::postproc {

inline constexpr double kGainFloor = 0.0316;  // -30 dB
inline constexpr double kEps = 1e-8;

// Exponential integral E1(v) = int_1^inf exp(-v t) / t dt for v > 0: power
// series below 1, continued fraction above.
double expint_e1(double v);

// Clamped MMSE-LSA gain; xi >= 0, gamma > 0.
double mmse_lsa_gain(double xi, double gamma);

struct FrameStats {
  double xi = 0;
  double gamma = 0;
  double gain = 1;
  bool reset = false;
};

class SnrTrack {
 public:
  // Adds one frame of per-frame variances and returns {xi', gamma}.
  std::pair<double, double> update(double var_xhat, double var_n, double var_y);
  // Rate-of-change test against the previous frame's xi'. On reset the
  // cumulative means restart from the most recent frame. The stored xi' is
  // always advanced.
  bool maybe_reset(double xi);
  void clear() { *this = SnrTrack{}; }

  double cum_xhat() const { return count_ ? s_xhat_ / count_ : 0.0; }
  double cum_n() const { return count_ ? s_n_ / count_ : 0.0; }
  double cum_y() const { return count_ ? s_y_ / count_ : 0.0; }
  std::size_t frame_count() const { return count_; }
  double prev_xi() const { return prev_xi_; }
  bool has_prev() const { return has_prev_; }

 private:
  double s_xhat_ = 0, s_n_ = 0, s_y_ = 0;
  double last_xhat_ = 0, last_n_ = 0, last_y_ = 0;
  std::size_t count_ = 0;
  double prev_xi_ = 0;
  bool has_prev_ = false;
};

// Mean of |z|^2 over n bins.
template <typename T>
double frame_variance(const T* re, const T* im, std::size_t n);

// Update, gain, reset check; scales x in place by G.
template <typename T>
FrameStats process_frame(SnrTrack& track, T* x_re, T* x_im, const T* y_re, const T* y_im,
                         std::size_t bins);

template <typename T>
dsp::ComplexSpectrogram<T> apply_postproc(const dsp::ComplexSpectrogram<T>& xhat,
                                          const dsp::ComplexSpectrogram<T>& noisy,
                                          std::vector<FrameStats>* stats = nullptr);

}  // namespace dccrn::postproc
