// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <cmath>

#include "dccrn/gradcheck.hpp"
#include "dccrn/postproc.hpp"

using namespace dccrn;
using namespace dccrn::postproc;

namespace {

// E1(v) = exp(-v) * int_0^inf exp(-s) / (s + v) ds.
double e1_quadrature(double v) {
  boost::math::quadrature::exp_sinh<double> q;
  const double i = q.integrate([v](double s) { return std::exp(-s) / (s + v); }, 1e-14);
  return std::exp(-v) * i;
}

dsp::ComplexSpectrogram<double> random_spec(std::size_t frames, std::size_t bins,
                                            std::uint64_t seed) {
  dsp::ComplexSpectrogram<double> s;
  s.re = random_tensor<double>({frames, bins}, seed);
  s.im = random_tensor<double>({frames, bins}, seed + 1);
  return s;
}

}  // namespace

TEST_CASE("E1 against a quadrature oracle") {
  double worst = 0;
  for (int i = 0; i <= 200; ++i) {
    const double v = 1e-6 * std::pow(50.0 / 1e-6, i / 200.0);
    const double ref = e1_quadrature(v);
    worst = std::max(worst, std::abs(expint_e1(v) - ref) / ref);
  }
  for (double v : {0.999999, 1.0, 1.000001}) {
    const double ref = e1_quadrature(v);
    worst = std::max(worst, std::abs(expint_e1(v) - ref) / ref);
  }
  MESSAGE("worst relative error " << worst);
  CHECK(worst < 1e-9);
  CHECK_THROWS_AS(expint_e1(0.0), NumericError);
}

TEST_CASE("MMSE-LSA gain") {
  const double g = mmse_lsa_gain(1.0, 2.0);
  const double oracle = 0.5 * std::exp(0.5 * e1_quadrature(1.0));
  CHECK(std::abs(g - oracle) < 1e-12);
  CHECK(std::abs(g - 0.558) < 1e-3);
  CHECK(mmse_lsa_gain(0.0, 2.0) == kGainFloor);
  CHECK(mmse_lsa_gain(1e9, 2.0) > 0.999);
  CHECK(mmse_lsa_gain(1e9, 2.0) <= 1.0);
  for (double xi : {1e-8, 1e-3, 0.1, 1.0, 10.0, 1e4})
    for (double gamma : {1e-8, 0.5, 1.0, 3.0, 100.0}) {
      const double v = mmse_lsa_gain(xi, gamma);
      CHECK(v >= kGainFloor);
      CHECK(v <= 1.0);
    }
}

TEST_CASE("SNR track follows the cumulative-mean recursion") {
  SnrTrack tr;
  // (var_xhat, var_n, var_y) per frame.
  const double f[3][3] = {{1.0, 0.5, 2.0}, {3.0, 1.5, 4.0}, {2.0, 1.0, 0.5}};
  double sx = 0, sn = 0, sy = 0;
  for (int t = 0; t < 3; ++t) {
    auto [xi, gamma] = tr.update(f[t][0], f[t][1], f[t][2]);
    sx += f[t][0];
    sn += f[t][1];
    sy += f[t][2];
    CHECK(xi == doctest::Approx((sx / (t + 1)) / (sn / (t + 1))).epsilon(1e-15));
    CHECK(gamma == doctest::Approx((sy / (t + 1)) / (sn / (t + 1))).epsilon(1e-15));
  }
  CHECK(tr.frame_count() == 3);

  SnrTrack zero;
  auto [xi0, gamma0] = zero.update(0.0, 2.0, 2.0);
  CHECK(xi0 == kEps);
  CHECK(gamma0 == 1.0);
  SnrTrack none;
  auto [xi1, gamma1] = none.update(2.0, 0.0, 2.0);
  CHECK(xi1 == 2.0 / kEps);
  CHECK(gamma1 == 2.0 / kEps);
}

TEST_CASE("reset fires only when the rate of change exceeds one") {
  SnrTrack tr;
  const double xis[] = {1.0, 2.0, 6.0, 6.0, 0.5, 1.5, 3.0000001};
  const bool expected[] = {false, false, true, false, false, true, true};
  for (std::size_t t = 0; t < 7; ++t) {
    tr.update(1.0 + t, 1.0, 2.0);
    CHECK(tr.maybe_reset(xis[t]) == expected[t]);
    CHECK(tr.prev_xi() == xis[t]);
  }
  // After the last reset only that frame remains.
  CHECK(tr.frame_count() == 1);
  CHECK(tr.cum_xhat() == 7.0);

  SnrTrack r;
  r.update(1.0, 1.0, 1.0);
  r.maybe_reset(1.0);
  r.update(5.0, 1.0, 1.0);
  CHECK(r.maybe_reset(3.0));  // r = 2
  auto [xi, gamma] = r.update(2.0, 2.0, 3.0);
  CHECK(xi == doctest::Approx((5.0 + 2.0) / (1.0 + 2.0)));
  CHECK(gamma == doctest::Approx((1.0 + 3.0) / (1.0 + 2.0)));
}

TEST_CASE("apply_postproc") {
  auto y = random_spec(30, 17, 1);
  // No suppression: residual zero, gain at its ceiling.
  std::vector<FrameStats> st;
  auto same = apply_postproc(y, y, &st);
  for (const auto& s : st) CHECK(s.gain > 0.9999);

  // Constant scaling x = a y: constant xi, gamma and gain.
  const double a = 0.6;
  auto x = y;
  for (auto& v : x.re.data()) v *= a;
  for (auto& v : x.im.data()) v *= a;
  auto out = apply_postproc(x, y, &st);
  const double xi = a * a / ((1 - a) * (1 - a)), gamma = 1 / ((1 - a) * (1 - a));
  const double g = mmse_lsa_gain(xi, gamma);
  for (std::size_t t = 0; t < 30; ++t) {
    CHECK(st[t].xi == doctest::Approx(xi).epsilon(1e-10));
    CHECK(st[t].gamma == doctest::Approx(gamma).epsilon(1e-10));
    CHECK_FALSE(st[t].reset);
  }
  for (std::size_t i = 0; i < x.re.size(); ++i) {
    CHECK(out.re[i] == doctest::Approx(g * x.re[i]).epsilon(1e-9));
    CHECK(out.im[i] == doctest::Approx(g * x.im[i]).epsilon(1e-9));
  }

  // Never amplifies a frame; causal in time.
  auto z = random_spec(30, 17, 5);
  auto o1 = apply_postproc(z, y);
  for (std::size_t t = 0; t < 30; ++t)
    CHECK(frame_variance(o1.re.ptr() + t * 17, o1.im.ptr() + t * 17, 17) <=
          frame_variance(z.re.ptr() + t * 17, z.im.ptr() + t * 17, 17));
  auto z2 = z;
  z2.re[20 * 17 + 3] += 5.0;
  auto o2 = apply_postproc(z2, y);
  for (std::size_t i = 0; i < 20 * 17; ++i) CHECK(o1.re[i] == o2.re[i]);

  CHECK_THROWS_AS(apply_postproc(random_spec(3, 17, 9), y), ShapeError);
}
