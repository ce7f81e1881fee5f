// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Training targets and objectives.
//
// Frame SNR label:
//   xi(t)   = 10 log10(E_x(t) / E_n(t)), E = mean |.|^2 over bins (floored)
//   mu, sigma: mean and std of xi over one utterance
//   mu^     <- alpha mu^ + (1 - alpha) mu      (first utterance: mu^ = mu)
//   sigma^  <- alpha sigma^ + (1 - alpha) sigma
//   label   = (erf((xi - mu^) / sigma^) + 1) / 2
//
// Loss = SI-SNR(est, ref) + delta * MSE(snr_est, label).

#pragma once

#include <span>
#include <vector>

#include "dccrn/autodiff.hpp"
#include "dccrn/dsp.hpp"

namespace dccrn::targets {

inline constexpr double kAlpha = 0.99;
inline constexpr double kDelta = 30.0;
inline constexpr double kSiSnrEps = 1e-8;
inline constexpr double kEnergyFloor = 1e-8;
// Labels are kept strictly inside (0, 1).
inline constexpr double kLabelMargin = 1e-6;

// Per-frame SNR in dB from clean and noise spectra.
template <typename T>
std::vector<double> snr_label_raw(const dsp::ComplexSpectrogram<T>& clean,
                                  const dsp::ComplexSpectrogram<T>& noise);

struct SnrLabelState {
  double mu_hat = 0;
  double sigma_hat = 0;
  double alpha = kAlpha;
  bool initialized = false;

  // Folds in the mean and std of one utterance's frame SNRs.
  void update(std::span<const double> xi);
};

std::vector<double> snr_label_normalize_compress(std::span<const double> xi,
                                                 const SnrLabelState& state);

// Mean over the batch of -10 log10(|s|^2 / (|e|^2 + eps) + eps), with
// s = <est, ref> ref / |ref|^2 and e = est - s. est/ref [B, S]; ref is a
// constant target.
template <typename T>
ad::Var<T> si_snr_loss(const ad::Var<T>& est, const ad::Var<T>& ref);

// Scale-invariant SNR in dB of one signal pair (the negated loss).
template <typename T>
double si_snr_db(std::span<const T> est, std::span<const T> ref);

struct LossParts {
  double total = 0;
  double si_snr = 0;
  double snr_mse = 0;
};

// si_snr_loss + delta * mean((snr_est - label)^2); snr_est/label [B, T].
template <typename T>
ad::Var<T> combined_loss(const ad::Var<T>& est, const ad::Var<T>& ref, const ad::Var<T>& snr_est,
                         const ad::Var<T>& snr_label, double delta = kDelta,
                         LossParts* parts = nullptr);

}  // namespace dccrn::targets
