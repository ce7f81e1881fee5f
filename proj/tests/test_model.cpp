// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>

#include "dccrn/gradcheck.hpp"
#include "dccrn/model.hpp"

using namespace dccrn;
using cd = std::complex<double>;

namespace {

ComplexVar<double> random_complex(const Shape& s, std::uint64_t seed, bool grad = false) {
  return {ad::Var<double>(random_tensor<double>(s, seed), grad),
          ad::Var<double>(random_tensor<double>(s, seed + 1000), grad)};
}

ComplexWeight<double> random_weight(const Shape& s, std::size_t out, std::uint64_t seed) {
  ComplexWeight<double> w;
  w.re = ad::Var<double>(random_tensor<double>(s, seed));
  w.im = ad::Var<double>(random_tensor<double>(s, seed + 1));
  w.bias_re = ad::Var<double>(random_tensor<double>({out}, seed + 2));
  w.bias_im = ad::Var<double>(random_tensor<double>({out}, seed + 3));
  return w;
}

cd at(const ComplexVar<double>& x, std::size_t i) { return {x.re.value()[i], x.im.value()[i]}; }

// Scalar projection of a complex output, for gradient checks.
ad::Var<double> project(const ComplexVar<double>& y) {
  return ad::concat<double>({ad::reshape(y.re, {y.re.size()}), ad::reshape(y.im, {y.im.size()})},
                            0);
}

}  // namespace

TEST_CASE("complex conv2d matches a direct complex convolution") {
  const std::size_t B = 1, Ci = 2, Co = 3, TT = 4, F = 6, Kt = 2, Kf = 3;
  auto x = random_complex({B, Ci, TT, F}, 1);
  auto w = random_weight({Co, Ci, Kt, Kf}, Co, 10);
  ad::Conv2dSpec spec;
  spec.pad_t_lo = 1;
  spec.pad_f_lo = spec.pad_f_hi = 1;
  spec.stride_f = 2;
  auto y = complex_conv2d(x, w, spec);
  REQUIRE(y.shape() == Shape{B, Co, TT, 3});
  for (std::size_t o = 0; o < Co; ++o)
    for (std::size_t t = 0; t < TT; ++t)
      for (std::size_t f = 0; f < 3; ++f) {
        cd acc{w.bias_re.value()[o], w.bias_im.value()[o]};
        for (std::size_t c = 0; c < Ci; ++c)
          for (std::size_t i = 0; i < Kt; ++i)
            for (std::size_t j = 0; j < Kf; ++j) {
              const long ti = static_cast<long>(t + i) - 1;
              const long fj = static_cast<long>(2 * f + j) - 1;
              if (ti < 0 || fj < 0 || fj >= static_cast<long>(F)) continue;
              const std::size_t wi = ((o * Ci + c) * Kt + i) * Kf + j;
              acc += cd(w.re.value()[wi], w.im.value()[wi]) * at(x, (c * TT + ti) * F + fj);
            }
        const cd got = at(y, (o * TT + t) * 3 + f);
        CHECK(std::abs(got - acc) < 1e-12);
      }
}

TEST_CASE("complex transposed conv matches a direct complex scatter") {
  const std::size_t Ci = 2, Co = 2, TT = 3, F = 3, Kt = 2, Kf = 5;
  auto x = random_complex({1, Ci, TT, F}, 2);
  auto w = random_weight({Ci, Co, Kt, Kf}, Co, 20);
  ad::Conv2dSpec spec;
  spec.stride_f = 2;
  spec.pad_f_lo = spec.pad_f_hi = 2;
  spec.out_pad_f = 1;
  spec.pad_t_hi = 1;
  auto y = complex_deconv2d(x, w, spec);
  REQUIRE(y.shape() == Shape{1, Co, TT, 2 * F});
  std::vector<cd> ref(Co * TT * 2 * F);
  for (std::size_t o = 0; o < Co; ++o)
    for (std::size_t t = 0; t < TT; ++t)
      for (std::size_t f = 0; f < 2 * F; ++f)
        ref[(o * TT + t) * 2 * F + f] = {w.bias_re.value()[o], w.bias_im.value()[o]};
  for (std::size_t c = 0; c < Ci; ++c)
    for (std::size_t t = 0; t < TT; ++t)
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t o = 0; o < Co; ++o)
          for (std::size_t i = 0; i < Kt; ++i)
            for (std::size_t j = 0; j < Kf; ++j) {
              const long to = static_cast<long>(t + i);
              const long fo = static_cast<long>(2 * f + j) - 2;
              if (to >= static_cast<long>(TT) || fo < 0 || fo >= static_cast<long>(2 * F)) continue;
              const std::size_t wi = ((c * Co + o) * Kt + i) * Kf + j;
              ref[(o * TT + to) * 2 * F + fo] +=
                  cd(w.re.value()[wi], w.im.value()[wi]) * at(x, (c * TT + t) * F + f);
            }
  for (std::size_t n = 0; n < ref.size(); ++n) CHECK(std::abs(at(y, n) - ref[n]) < 1e-12);
}

TEST_CASE("complex linear projection and its gradients") {
  auto x = random_complex({2, 3, 4}, 3);
  auto w = random_weight({4, 5}, 5, 30);
  auto y = clp(x, w);
  REQUIRE(y.shape() == Shape{2, 3, 5});
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t o = 0; o < 5; ++o) {
      cd acc{w.bias_re.value()[o], w.bias_im.value()[o]};
      for (std::size_t i = 0; i < 4; ++i)
        acc += at(x, r * 4 + i) * cd(w.re.value()[i * 5 + o], w.im.value()[i * 5 + o]);
      CHECK(std::abs(at(y, r * 5 + o) - acc) < 1e-12);
    }
  auto res = grad_check(
      [](const std::vector<ad::Var<double>>& v) {
        ComplexWeight<double> cw{v[2], v[3], v[4], v[5]};
        return project(clp(ComplexVar<double>{v[0], v[1]}, cw));
      },
      {x.re.value(), x.im.value(), w.re.value(), w.im.value(), w.bias_re.value(),
       w.bias_im.value()});
  CHECK(res.max_rel_err < 1e-6);
  CHECK_THROWS_AS(clp(random_complex({2, 3}, 4), w), ShapeError);
}

TEST_CASE("complex TF-LSTM shapes, streaming pieces and gradients") {
  const std::size_t B = 2, C = 2, TT = 3, F = 2, H = 3;
  auto lw = [](std::size_t in, std::size_t h, std::uint64_t s) {
    return LstmWeights<double>{ad::Var<double>(random_tensor<double>({in, 4 * h}, s, -0.5, 0.5)),
                               ad::Var<double>(random_tensor<double>({h, 4 * h}, s + 1, -0.5, 0.5)),
                               ad::Var<double>(random_tensor<double>({4 * h}, s + 2, -0.5, 0.5))};
  };
  TfLstmWeights<double> w;
  w.f_blstm = {lw(C, H, 1), lw(C, H, 4), lw(C, H, 7), lw(C, H, 10)};
  w.clp_f = random_weight({2 * H, C}, C, 13);
  w.t_lstm_re = lw(C, H, 20);
  w.t_lstm_im = lw(C, H, 23);
  w.clp_t = random_weight({H, C}, C, 26);
  auto e = random_complex({B, C, TT, F}, 5);
  auto o = complex_tf_lstm(e, w);
  CHECK(o.shape() == Shape{B, C, TT, F});

  // Frame t of the output depends on frames <= t only.
  auto e2 = e;
  e2.re = ad::Var<double>(e.re.value());
  e2.re.mutable_value()[(0 * C + 1) * TT * F + 2 * F + 1] += 1.0;
  auto o2 = complex_tf_lstm(e2, w);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t f = 0; f < F; ++f) {
          const std::size_t i = ((b * C + c) * TT + t) * F + f;
          CHECK(o.re.value()[i] == o2.re.value()[i]);
          CHECK(o.im.value()[i] == o2.im.value()[i]);
        }

  auto res = grad_check(
      [&](const std::vector<ad::Var<double>>& v) {
        return project(complex_tf_lstm(ComplexVar<double>{v[0], v[1]}, w));
      },
      {e.re.value(), e.im.value()});
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("subband split and merge") {
  SubbandConfig cfg{4, 16};
  const std::size_t K = 4, W = 4, N = 16;
  auto y = random_complex({2, 3, N}, 6);
  Tensor<double> are({K, W, W}), aim({K, W, W}), sre({1, N, N}), sim({1, N, N});
  identity_init(are, aim, 1, 0.0);
  identity_init(sre, sim, 2, 0.0);
  ad::Var<double> a_re(are), a_im(aim), s_re(sre.reshaped({N, N})), s_im(sim.reshaped({N, N}));
  auto bands = split_bands(y, a_re, a_im, cfg);
  REQUIRE(bands.shape() == Shape{2, K, 3, W});
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t f = 0; f < W; ++f)
          CHECK(at(bands, ((b * K + k) * 3 + t) * W + f) == at(y, (b * 3 + t) * N + k * W + f));
  auto back = merge_bands(bands, s_re, s_im, cfg);
  for (std::size_t i = 0; i < y.re.size(); ++i) CHECK(at(back, i) == at(y, i));

  // Random complex A_k against a direct complex product.
  auto a = random_weight({K, W, W}, 1, 40);
  auto sb = split_bands(y, a.re, a.im, cfg);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t f = 0; f < W; ++f) {
      cd acc = 0;
      for (std::size_t g = 0; g < W; ++g) {
        const std::size_t ai = (k * W + g) * W + f;
        acc += at(y, 1 * N + k * W + g) * cd(a.re.value()[ai], a.im.value()[ai]);
      }
      CHECK(std::abs(at(sb, (k * 3 + 1) * W + f) - acc) < 1e-12);
    }

  Tensor<double> nre({K, W, W}), nim({K, W, W});
  identity_init(nre, nim, 3);
  double off = 0;
  for (std::size_t i = 0; i < nre.size(); ++i) {
    const bool diag = (i % (W * W)) % (W + 1) == 0;
    off = std::max(off, std::abs(nre[i] - (diag ? 1.0 : 0.0)));
    off = std::max(off, std::abs(nim[i]));
  }
  CHECK(off > 0);
  CHECK(off < 1e-2);
  CHECK_THROWS_AS((SubbandConfig{3, 16}.validate()), ShapeError);
}

TEST_CASE("causal band normalization sees only past frames") {
  auto x = random_complex({1, 2, 5, 4}, 7);
  BandNormWeights<double> w{
      ad::Var<double>(Tensor<double>({2}, 1.0)), ad::Var<double>(Tensor<double>({2})),
      ad::Var<double>(Tensor<double>({2}, 1.0)), ad::Var<double>(Tensor<double>({2}))};
  auto y = normalize_bands(x, w, ad::NormSpan::kCausal);
  auto x2 = x;
  x2.im = ad::Var<double>(x.im.value());
  x2.im.mutable_value()[4 * 4 + 3] = 9.0;  // band 0, frame 4
  auto y2 = normalize_bands(x2, w, ad::NormSpan::kCausal);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t f = 0; f < 4; ++f) CHECK(y.im.value()[t * 4 + f] == y2.im.value()[t * 4 + f]);
  CHECK(y.im.value()[4 * 4] != y2.im.value()[4 * 4]);
  for (std::size_t i = 0; i < y.re.size(); ++i) CHECK(y.re.value()[i] == y2.re.value()[i]);
}

TEST_CASE("model config presets, validation and map round trip") {
  CHECK_NOTHROW(ModelConfig::full().validate());
  CHECK_NOTHROW(ModelConfig::toy().validate());
  CHECK_NOTHROW(ModelConfig::tiny().validate());
  auto cfg = ModelConfig::full();
  CHECK(cfg.net_bins() == 256);
  CHECK(cfg.band_width() == 64);
  CHECK(cfg.bins_after(4) == 4);
  CHECK(ModelConfig::from_map(cfg.to_map()) == cfg);
  auto tiny = ModelConfig::tiny();
  tiny.input_norm = ad::NormSpan::kUtterance;
  CHECK(ModelConfig::from_map(tiny.to_map()) == tiny);

  auto bad = cfg;
  bad.kernel_t = 3;
  CHECK_THROWS_AS(bad.validate(), ShapeError);
  bad = cfg;
  bad.channels = {32, 64, 128, 256, 512, 1024, 2048};
  CHECK_THROWS_AS(bad.validate(), ShapeError);
  bad = cfg;
  bad.channels[1] = 63;
  CHECK_THROWS_AS(bad.validate(), ShapeError);
  auto kv = cfg.to_map();
  kv["rnn_units"] = "abc";
  CHECK_THROWS_AS(ModelConfig::from_map(kv), DataError);
  kv.erase("rnn_units");
  CHECK_THROWS_AS(ModelConfig::from_map(kv), DataError);
}

TEST_CASE("full model parameter count and output shapes") {
  Model<float> m(ModelConfig::full());
  const std::size_t n = m.count_params();
  MESSAGE("full model parameters: " << n);
  CHECK(n >= 2805000);
  CHECK(n <= 3795000);
  std::size_t by_group = 0;
  for (const auto& e : m.params().entries()) {
    const auto g = Model<float>::group_of(e.name);
    CHECK((g == "split" || g == "encoder" || g == "pathway" || g == "tf" || g == "decoder" ||
           g == "merge" || g == "snr"));
    by_group += e.var.size();
  }
  CHECK(by_group == n);

  ad::NoGradGuard ng;
  auto x = ComplexVar<float>{ad::Var<float>(random_tensor<float>({1, 6, 257}, 1)),
                             ad::Var<float>(random_tensor<float>({1, 6, 257}, 2))};
  StageTimes st;
  auto out = m.forward(x, false, &st);
  CHECK(out.enhanced.shape() == Shape{1, 6, 257});
  CHECK(out.snr.shape() == Shape{1, 6});
  for (std::size_t t = 0; t < 6; ++t) {
    CHECK(out.enhanced.re.value()[t * 257] == 0.0f);
    CHECK(out.snr.value()[t] > 0.0f);
    CHECK(out.snr.value()[t] < 1.0f);
  }
  CHECK(st.encoder > 0);
  CHECK_THROWS_AS(m.forward(ComplexVar<float>{ad::Var<float>(Tensor<float>({1, 6, 256})),
                                              ad::Var<float>(Tensor<float>({1, 6, 256}))},
                            false),
                  ShapeError);
}

TEST_CASE("initial model is close to an identity map on the network bins") {
  Model<double> m(ModelConfig::tiny());
  ad::NoGradGuard ng;
  auto x = random_complex({1, 5, 9}, 8);
  auto out = m.forward(x, false);
  double err = 0, ref = 0;
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t f = 1; f < 9; ++f) {
      err += std::norm(at(out.enhanced, t * 9 + f) - at(x, t * 9 + f));
      ref += std::norm(at(x, t * 9 + f));
    }
  MESSAGE("relative deviation from identity: " << std::sqrt(err / ref));
  CHECK(std::sqrt(err / ref) < 0.5);
}

TEST_CASE("model output at frame t ignores input beyond t + 1") {
  Model<double> m(ModelConfig::tiny());
  ad::NoGradGuard ng;
  const std::size_t TT = 8, F = 9, t0 = 5;
  auto x = random_complex({1, TT, F}, 9);
  auto a = m.forward(x, false);
  auto x2 = x;
  x2.re = ad::Var<double>(x.re.value());
  for (std::size_t f = 0; f < F; ++f) x2.re.mutable_value()[t0 * F + f] += 3.0;
  auto b = m.forward(x2, false);
  for (std::size_t t = 0; t < TT; ++t) {
    double d = 0;
    for (std::size_t f = 0; f < F; ++f)
      d += std::abs(at(a.enhanced, t * F + f) - at(b.enhanced, t * F + f));
    if (t + 1 < t0) CHECK(d == 0.0);
    if (t + 1 == t0) CHECK(d > 0.0);  // the one-frame look-ahead
    const double ds = std::abs(a.snr.value()[t] - b.snr.value()[t]);
    if (t < t0) CHECK(ds == 0.0);
  }
}

TEST_CASE("tiny model gradients against finite differences") {
  Model<double> m(ModelConfig::tiny());
  auto x = random_complex({2, 4, 9}, 11);
  auto loss = [&](bool grad) {
    auto out = m.forward(x, true);
    auto r = ad::Var<double>(random_tensor<double>(out.enhanced.shape(), 12));
    auto i = ad::Var<double>(random_tensor<double>(out.enhanced.shape(), 13));
    auto l = ad::add(ad::sum(ad::mul(out.enhanced.re, r)),
                     ad::add(ad::sum(ad::mul(out.enhanced.im, i)), ad::sum(out.snr)));
    if (grad) ad::backward(l);
    return l.value()[0];
  };
  m.params().zero_grad();
  loss(true);

  std::mt19937_64 rng(5);
  double worst = 0;
  std::string worst_name;
  for (auto& e : m.params().entries()) {
    auto& v = e.var.mutable_value();
    const auto& g = e.var.grad();
    REQUIRE(g.size() == v.size());
    double num2 = 0, ana2 = 0, diff2 = 0;
    for (int probe = 0; probe < 3; ++probe) {
      const std::size_t k = rng() % v.size();
      const double saved = v[k], h = 1e-5;
      v[k] = saved + h;
      const double lp = loss(false);
      v[k] = saved - h;
      const double lm = loss(false);
      v[k] = saved;
      const double num = (lp - lm) / (2 * h);
      num2 += num * num;
      ana2 += g[k] * g[k];
      diff2 += (num - g[k]) * (num - g[k]);
    }
    // Biases ahead of training-mode batch norm have zero true gradient.
    const double rel = std::sqrt(diff2) / std::max({std::sqrt(num2), std::sqrt(ana2), 1e-4});
    if (rel > worst) {
      worst = rel;
      worst_name = e.name;
    }
  }
  MESSAGE("worst parameter " << worst_name << " rel err " << worst);
  CHECK(worst < 1e-4);
}
