// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dccrn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

namespace dccrn::targets {

using ad::Var;

template <typename T>
std::vector<double> snr_label_raw(const dsp::ComplexSpectrogram<T>& clean,
                                  const dsp::ComplexSpectrogram<T>& noise) {
  if (clean.re.shape() != noise.re.shape())
    throw ShapeError("snr_label_raw: clean " + shape_str(clean.re.shape()) + " and noise " +
                     shape_str(noise.re.shape()) + " differ");
  const std::size_t F = clean.bins();
  std::vector<double> xi(clean.frames());
  auto energy = [F](const dsp::ComplexSpectrogram<T>& s, std::size_t t) {
    double e = 0;
    for (std::size_t f = 0; f < F; ++f) {
      const double r = s.re[t * F + f], i = s.im[t * F + f];
      e += r * r + i * i;
    }
    return std::max(e / static_cast<double>(F), kEnergyFloor);
  };
  for (std::size_t t = 0; t < xi.size(); ++t)
    xi[t] = 10.0 * std::log10(energy(clean, t) / energy(noise, t));
  return xi;
}

void SnrLabelState::update(std::span<const double> xi) {
  if (xi.empty()) throw DataError("snr label: empty utterance");
  double m = 0;
  for (double v : xi) m += v;
  m /= static_cast<double>(xi.size());
  double var = 0;
  for (double v : xi) var += (v - m) * (v - m);
  const double s = std::sqrt(var / static_cast<double>(xi.size()));
  if (!initialized) {
    mu_hat = m;
    sigma_hat = s;
    initialized = true;
  } else {
    mu_hat = mu_hat * alpha + m * (1 - alpha);
    sigma_hat = sigma_hat * alpha + s * (1 - alpha);
  }
}

std::vector<double> snr_label_normalize_compress(std::span<const double> xi,
                                                 const SnrLabelState& state) {
  if (!state.initialized || !(state.sigma_hat > 0))
    throw NumericError(
        "snr label: degenerate statistics (sigma_hat = " + std::to_string(state.sigma_hat) + ")");
  std::vector<double> out(xi.size());
  for (std::size_t t = 0; t < xi.size(); ++t) {
    const double z = (xi[t] - state.mu_hat) / state.sigma_hat;
    out[t] = std::clamp((std::erf(z) + 1.0) / 2.0, kLabelMargin, 1.0 - kLabelMargin);
  }
  return out;
}

template <typename T>
Var<T> si_snr_loss(const Var<T>& est, const Var<T>& ref) {
  if (est.shape() != ref.shape() || est.shape().size() != 2)
    throw ShapeError("si_snr_loss: est " + shape_str(est.shape()) + " and ref " +
                     shape_str(ref.shape()) + " must be equal [B, S]");
  const std::size_t B = est.dim(0), S = est.dim(1);
  const T* x = est.value().ptr();
  const T* r = ref.value().ptr();
  // Per row: a = <x, r>, R = |r|^2, P = a^2 / R, E = |x - (a / R) r|^2.
  std::vector<double> a(B), R(B), P(B), E(B), er(B);
  double total = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const T* xb = x + b * S;
    const T* rb = r + b * S;
    double dot = 0, rr = 0;
    for (std::size_t n = 0; n < S; ++n) {
      dot += static_cast<double>(xb[n]) * rb[n];
      rr += static_cast<double>(rb[n]) * rb[n];
    }
    if (!(rr > 0))
      throw DataError("si_snr_loss: reference row " + std::to_string(b) + " is silent");
    const double k = dot / rr;
    double e2 = 0, edot = 0;
    for (std::size_t n = 0; n < S; ++n) {
      const double e = xb[n] - k * rb[n];
      e2 += e * e;
      edot += e * rb[n];
    }
    a[b] = dot;
    R[b] = rr;
    P[b] = dot * k;
    E[b] = e2;
    er[b] = edot;
    total += -10.0 * std::log10(P[b] / (e2 + kSiSnrEps) + kSiSnrEps);
  }
  Tensor<T> out({1}, static_cast<T>(total / static_cast<double>(B)));
  // The reference is not a graph input; keep its samples for backward.
  auto ref_copy = std::make_shared<std::vector<T>>(r, r + B * S);
  return ad::make_op<T>(std::move(out), {est}, "si_snr", [=](ad::Node<T>& self) {
    if (!self.parents[0]->requires_grad) return;
    const T* r = ref_copy->data();
    const double c = 10.0 / std::numbers::ln10 * self.grad[0] / static_cast<double>(B);
    T* g = self.parents[0]->grad_buffer().ptr();
    const T* xv = self.parents[0]->value.ptr();
    for (std::size_t b = 0; b < B; ++b) {
      const double den = E[b] + kSiSnrEps;
      const double Q = P[b] / den;
      const double k = a[b] / R[b];
      // dP = 2 k r, dE = 2 (e - (<e, r> / R) r), L = -c ln(Q + eps).
      const double s = -c / (Q + kSiSnrEps);
      for (std::size_t n = 0; n < S; ++n) {
        const double rn = r[b * S + n];
        const double e = xv[b * S + n] - k * rn;
        const double dP = 2 * k * rn;
        const double dE = 2 * (e - er[b] / R[b] * rn);
        g[b * S + n] += static_cast<T>(s * (dP / den - P[b] * dE / (den * den)));
      }
    }
  });
}

template <typename T>
double si_snr_db(std::span<const T> est, std::span<const T> ref) {
  if (est.size() != ref.size()) throw ShapeError("si_snr_db: length mismatch");
  ad::NoGradGuard ng;
  const Shape s{1, est.size()};
  Var<T> e(Tensor<T>(s, std::vector<T>(est.begin(), est.end())));
  Var<T> r(Tensor<T>(s, std::vector<T>(ref.begin(), ref.end())));
  return -static_cast<double>(si_snr_loss(e, r).value()[0]);
}

template <typename T>
Var<T> combined_loss(const Var<T>& est, const Var<T>& ref, const Var<T>& snr_est,
                     const Var<T>& snr_label, double delta, LossParts* parts) {
  if (snr_est.shape() != snr_label.shape())
    throw ShapeError("combined_loss: snr estimate " + shape_str(snr_est.shape()) + " and label " +
                     shape_str(snr_label.shape()) + " differ");
  auto si = si_snr_loss(est, ref);
  auto mse = ad::mean(ad::square(ad::sub(snr_est, snr_label)));
  auto total = ad::add(si, ad::mul_scalar(mse, static_cast<T>(delta)));
  if (parts) {
    parts->si_snr = si.value()[0];
    parts->snr_mse = mse.value()[0];
    parts->total = total.value()[0];
  }
  return total;
}

#define DCCRN_INSTANTIATE(T)                                                                   \
  template std::vector<double> snr_label_raw<T>(const dsp::ComplexSpectrogram<T>&,             \
                                                const dsp::ComplexSpectrogram<T>&);            \
  template Var<T> si_snr_loss<T>(const Var<T>&, const Var<T>&);                                \
  template double si_snr_db<T>(std::span<const T>, std::span<const T>);                        \
  template Var<T> combined_loss<T>(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&, \
                                   double, LossParts*);

DCCRN_INSTANTIATE(float)
DCCRN_INSTANTIATE(double)

}  // namespace dccrn::targets
