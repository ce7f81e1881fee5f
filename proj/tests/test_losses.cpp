// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "dccrn/gradcheck.hpp"
#include "dccrn/losses.hpp"

using namespace dccrn;
using namespace dccrn::targets;

namespace {

dsp::ComplexSpectrogram<double> random_spec(std::size_t frames, std::size_t bins,
                                            std::uint64_t seed) {
  dsp::ComplexSpectrogram<double> s;
  s.re = random_tensor<double>({frames, bins}, seed);
  s.im = random_tensor<double>({frames, bins}, seed + 1);
  return s;
}

// Maclaurin series of erf.
double erf_series(double x) {
  double term = x, sum = x;
  for (int n = 1; n < 60; ++n) {
    term *= -x * x / n;
    sum += term / (2 * n + 1);
  }
  return 2 / std::sqrt(std::numbers::pi) * sum;
}

}  // namespace

TEST_CASE("defaults") {
  CHECK(kAlpha == 0.99);
  CHECK(kDelta == 30.0);
  CHECK(SnrLabelState{}.alpha == 0.99);
}

TEST_CASE("raw frame SNR") {
  auto x = random_spec(5, 9, 1);
  CHECK(snr_label_raw(x, x) == std::vector<double>(5, 0.0));
  auto n = x;
  for (auto& v : n.re.data()) v /= 10;
  for (auto& v : n.im.data()) v /= 10;
  for (double v : snr_label_raw(x, n)) CHECK(v == doctest::Approx(20.0).epsilon(1e-12));

  auto y = random_spec(5, 9, 3);
  auto xi = snr_label_raw(x, y);
  for (std::size_t t = 0; t < 5; ++t) {
    double ex = 0, ey = 0;
    for (std::size_t f = 0; f < 9; ++f) {
      ex += std::norm(std::complex<double>(x.re[t * 9 + f], x.im[t * 9 + f]));
      ey += std::norm(std::complex<double>(y.re[t * 9 + f], y.im[t * 9 + f]));
    }
    CHECK(xi[t] == doctest::Approx(20 * std::log10(std::sqrt(ex / 9) / std::sqrt(ey / 9))));
  }
  dsp::ComplexSpectrogram<double> silent(5, 9);
  for (double v : snr_label_raw(x, silent)) CHECK(std::isfinite(v));
  CHECK_THROWS_AS(snr_label_raw(x, random_spec(4, 9, 5)), ShapeError);
}

TEST_CASE("moving statistics") {
  const std::vector<double> u1{1.0, 3.0, 5.0, 7.0}, u2{-2.0, 2.0};
  SnrLabelState st;
  st.update(u1);
  CHECK(st.mu_hat == 4.0);
  CHECK(st.sigma_hat == std::sqrt(5.0));
  st.update(u2);
  CHECK(st.mu_hat == 4.0 * 0.99 + 0.0 * (1 - 0.99));
  CHECK(st.sigma_hat == std::sqrt(5.0) * 0.99 + 2.0 * (1 - 0.99));

  SnrLabelState zero;
  zero.alpha = 0;
  zero.update(u1);
  zero.update(u2);
  CHECK(zero.mu_hat == 0.0);
  CHECK(zero.sigma_hat == 2.0);

  SnrLabelState fixed;
  for (int i = 0; i < 50; ++i) fixed.update(u1);
  CHECK(fixed.mu_hat == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(fixed.sigma_hat == doctest::Approx(std::sqrt(5.0)).epsilon(1e-14));
  CHECK_THROWS_AS(fixed.update({}), DataError);
}

TEST_CASE("normalized, compressed labels") {
  SnrLabelState st;
  st.update(std::vector<double>{0.0, 10.0});
  const double mu = st.mu_hat, sigma = st.sigma_hat;
  std::vector<double> xi{mu, mu + sigma, -100, -5, 0, 3, 8, 20, 100};
  auto lab = snr_label_normalize_compress(xi, st);
  CHECK(lab[0] == 0.5);
  CHECK(lab[1] == doctest::Approx((erf_series(1.0) + 1) / 2).epsilon(1e-14));
  CHECK(lab[1] == doctest::Approx(0.921).epsilon(1e-3));
  for (double v : lab) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  for (std::size_t i = 3; i < xi.size(); ++i) CHECK(lab[i] >= lab[i - 1]);

  SnrLabelState flat;
  flat.update(std::vector<double>{2.0, 2.0});
  CHECK_THROWS_AS(snr_label_normalize_compress(xi, flat), NumericError);
  CHECK_THROWS_AS(snr_label_normalize_compress(xi, SnrLabelState{}), NumericError);
}

TEST_CASE("SI-SNR loss") {
  auto ref = random_tensor<double>({2, 64}, 7);
  auto est = random_tensor<double>({2, 64}, 8);
  ad::Var<double> r(ref), e(est);
  CHECK(si_snr_loss(r, r).value()[0] <= -80.0);

  auto e2 = est;
  for (auto& v : e2.data()) v *= 2;
  const double l1 = si_snr_loss(e, r).value()[0];
  const double l2 = si_snr_loss(ad::Var<double>(e2), r).value()[0];
  // Invariance is exact up to the epsilon terms: |dL| <= 10 / ln 10 * 2 eps (1 / E + 1 / P).
  CHECK(std::abs(l1 - l2) < 1e-7);

  // Direct formula per row.
  double direct = 0;
  for (std::size_t b = 0; b < 2; ++b) {
    double dot = 0, rr = 0;
    for (std::size_t n = 0; n < 64; ++n) {
      dot += est[b * 64 + n] * ref[b * 64 + n];
      rr += ref[b * 64 + n] * ref[b * 64 + n];
    }
    double s2 = 0, n2 = 0;
    for (std::size_t n = 0; n < 64; ++n) {
      const double s = dot / rr * ref[b * 64 + n];
      s2 += s * s;
      n2 += (est[b * 64 + n] - s) * (est[b * 64 + n] - s);
    }
    direct += -10 * std::log10(s2 / (n2 + kSiSnrEps) + kSiSnrEps) / 2;
  }
  CHECK(l1 == doctest::Approx(direct).epsilon(1e-12));

  // Orthogonal, equal norms: the target projection vanishes.
  ad::Var<double> a(Tensor<double>({1, 4}, {1, 0, 0, 0})), o(Tensor<double>({1, 4}, {0, 1, 0, 0}));
  CHECK(si_snr_loss(o, a).value()[0] == doctest::Approx(-10 * std::log10(kSiSnrEps)));
  CHECK(si_snr_db<double>(est.vec(), est.vec()) >= 80.0);

  auto res = grad_check([&](const std::vector<ad::Var<double>>& v) { return si_snr_loss(v[0], r); },
                        {est});
  CHECK(res.max_rel_err < 1e-6);
  CHECK_THROWS_AS(si_snr_loss(e, ad::Var<double>(Tensor<double>({2, 64}))), DataError);
  CHECK_THROWS_AS(si_snr_loss(e, ad::Var<double>(Tensor<double>({2, 63}))), ShapeError);
}

TEST_CASE("combined loss") {
  auto ref = random_tensor<double>({2, 32}, 9);
  auto est = random_tensor<double>({2, 32}, 10);
  auto snr = random_tensor<double>({2, 5}, 11, 0.1, 0.9);
  auto lab = random_tensor<double>({2, 5}, 12, 0.1, 0.9);
  ad::Var<double> r(ref), e(est);
  LossParts p;
  auto l = combined_loss(e, r, ad::Var<double>(snr), ad::Var<double>(snr), kDelta, &p);
  CHECK(l.value()[0] == si_snr_loss(e, r).value()[0]);
  CHECK(p.snr_mse == 0.0);

  combined_loss(e, r, ad::Var<double>(snr), ad::Var<double>(lab), kDelta, &p);
  double mse = 0;
  for (std::size_t i = 0; i < 10; ++i) mse += (snr[i] - lab[i]) * (snr[i] - lab[i]) / 10;
  CHECK(p.snr_mse == doctest::Approx(mse).epsilon(1e-14));
  CHECK(p.total == doctest::Approx(p.si_snr + 30 * mse).epsilon(1e-14));
  CHECK(-5.0 + kDelta * 0.1 == doctest::Approx(-2.0));

  auto res = grad_check(
      [&](const std::vector<ad::Var<double>>& v) {
        return combined_loss(v[0], r, v[1], ad::Var<double>(lab));
      },
      {est, snr});
  CHECK(res.max_rel_err < 1e-6);
}
