// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dccrn/verify.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <chrono>
#include <cmath>
#include <complex>
#include <random>
#include <sstream>

#include "dccrn/gradcheck.hpp"
#include "dccrn/losses.hpp"
#include "dccrn/postproc.hpp"
#include "dccrn/rtf.hpp"
#include "dccrn/stream.hpp"
#include "dccrn/trainer.hpp"

namespace dccrn::verify {

namespace {

using cd = std::complex<double>;
using VD = ad::Var<double>;
using Inputs = std::vector<VD>;

CheckResult result(std::string name, double value, double tol, std::string detail = {}) {
  CheckResult r;
  r.name = std::move(name);
  r.value = value;
  r.tolerance = tol;
  r.passed = value < tol;
  r.detail = std::move(detail);
  return r;
}

ComplexVar<double> random_complex(const Shape& s, std::uint64_t seed) {
  return {VD(random_tensor<double>(s, seed)), VD(random_tensor<double>(s, seed + 1000))};
}

ComplexWeight<double> random_weight(const Shape& s, std::size_t out, std::uint64_t seed) {
  return {VD(random_tensor<double>(s, seed)), VD(random_tensor<double>(s, seed + 1)),
          VD(random_tensor<double>({out}, seed + 2)), VD(random_tensor<double>({out}, seed + 3))};
}

cd at(const ComplexVar<double>& x, std::size_t i) { return {x.re.value()[i], x.im.value()[i]}; }

VD flat(const ComplexVar<double>& y) {
  return ad::concat<double>({ad::reshape(y.re, {y.re.size()}), ad::reshape(y.im, {y.im.size()})},
                            0);
}

// Worst |a - b| relative to the largest |b|.
double rel_err(const std::vector<cd>& got, const std::vector<cd>& ref) {
  double d = 0, m = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    d = std::max(d, std::abs(got[i] - ref[i]));
    m = std::max(m, std::abs(ref[i]));
  }
  return d / std::max(m, 1e-300);
}

std::vector<cd> values(const ComplexVar<double>& x) {
  std::vector<cd> v(x.re.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = at(x, i);
  return v;
}

LstmWeights<double> lstm_weights(std::size_t in, std::size_t h, std::uint64_t s) {
  return {VD(random_tensor<double>({in, 4 * h}, s, -0.5, 0.5)),
          VD(random_tensor<double>({h, 4 * h}, s + 1, -0.5, 0.5)),
          VD(random_tensor<double>({4 * h}, s + 2, -0.5, 0.5))};
}

// Plain LSTM recurrence, gates ordered input, forget, cell, output.
std::vector<double> lstm_oracle(const Tensor<double>& x, const LstmWeights<double>& w) {
  const std::size_t N = x.dim(0), S = x.dim(1), I = x.dim(2), H = w.hidden();
  const auto& wx = w.wx.value();
  const auto& wh = w.wh.value();
  const auto& b = w.bias.value();
  auto sig = [](double v) { return 1 / (1 + std::exp(-v)); };
  std::vector<double> out(N * S * H);
  for (std::size_t n = 0; n < N; ++n) {
    std::vector<double> h(H, 0.0), c(H, 0.0);
    for (std::size_t s = 0; s < S; ++s) {
      std::vector<double> z(4 * H);
      for (std::size_t q = 0; q < 4 * H; ++q) {
        z[q] = b[q];
        for (std::size_t i = 0; i < I; ++i) z[q] += x[(n * S + s) * I + i] * wx[i * 4 * H + q];
        for (std::size_t j = 0; j < H; ++j) z[q] += h[j] * wh[j * 4 * H + q];
      }
      for (std::size_t j = 0; j < H; ++j) {
        c[j] = sig(z[H + j]) * c[j] + sig(z[j]) * std::tanh(z[2 * H + j]);
        h[j] = sig(z[3 * H + j]) * std::tanh(c[j]);
        out[(n * S + s) * H + j] = h[j];
      }
    }
  }
  return out;
}

double e1_quadrature(double v) {
  boost::math::quadrature::exp_sinh<double> q;
  return std::exp(-v) * q.integrate([v](double s) { return std::exp(-s) / (s + v); }, 1e-14);
}

// Central differences over a few coordinates of every parameter of the tiny
// model, training mode, against one backward pass.
std::pair<double, std::string> tiny_model_gradients() {
  Model<double> m(ModelConfig::tiny());
  auto x = random_complex({2, 4, 9}, 11);
  const auto r = random_tensor<double>({2, 4, 9}, 12), i = random_tensor<double>({2, 4, 9}, 13);
  auto loss = [&](bool grad) {
    auto out = m.forward(x, true);
    auto l = ad::add(ad::sum(ad::mul(out.enhanced.re, VD(r))),
                     ad::add(ad::sum(ad::mul(out.enhanced.im, VD(i))), ad::sum(out.snr)));
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
  return {worst, worst_name};
}

// Output and input SI-SNR in dB against the framed clean reference.
std::pair<double, double> si_snr_pair(Model<float>& m, const dsp::Mixture& mx) {
  const auto& fc = m.config().frame;
  ad::NoGradGuard ng;
  const auto spec = dsp::stft<float>(mx.noisy.samples, fc);
  const auto y = dsp::istft(from_batch(m.forward(as_batch(spec), false).enhanced), fc);
  const auto ref = dsp::istft(dsp::stft<float>(mx.clean.samples, fc), fc);
  const auto noisy = dsp::istft(spec, fc);
  return {targets::si_snr_db<float>(y, ref), targets::si_snr_db<float>(noisy, ref)};
}

}  // namespace

CheckResult timed(const std::function<CheckResult()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  auto r = fn();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

CheckResult gradient_suite() {
  using F = std::function<VD(const Inputs&)>;
  struct Case {
    const char* name;
    F f;
    std::vector<Tensor<double>> in;
  };
  auto rnd = [](const Shape& s, std::uint64_t seed, double lo = -1, double hi = 1) {
    return random_tensor<double>(s, seed, lo, hi);
  };
  const Shape s23{2, 3};
  ad::Conv2dSpec conv;
  conv.pad_t_lo = 1;
  conv.pad_f_lo = conv.pad_f_hi = 1;
  conv.stride_f = 2;
  ad::Conv2dSpec deconv;
  deconv.stride_f = 2;
  deconv.pad_f_lo = deconv.pad_f_hi = 2;
  deconv.out_pad_f = 1;
  deconv.pad_t_hi = 1;
  const dsp::FrameConfig small{8, 4, 16, 16000};
  const SubbandConfig sub{2, 8};
  std::vector<Case> cases{
      {"add", [](const Inputs& v) { return ad::add(v[0], v[1]); }, {rnd(s23, 1), rnd(s23, 2)}},
      {"sub", [](const Inputs& v) { return ad::sub(v[0], v[1]); }, {rnd(s23, 3), rnd(s23, 4)}},
      {"mul", [](const Inputs& v) { return ad::mul(v[0], v[1]); }, {rnd(s23, 5), rnd(s23, 6)}},
      {"div", [](const Inputs& v) { return ad::div(v[0], v[1]); },
       {rnd(s23, 7), rnd(s23, 8, 0.5, 1.5)}},
      {"neg", [](const Inputs& v) { return ad::neg(v[0]); }, {rnd(s23, 9)}},
      {"add_scalar", [](const Inputs& v) { return ad::add_scalar(v[0], 0.3); }, {rnd(s23, 10)}},
      {"mul_scalar", [](const Inputs& v) { return ad::mul_scalar(v[0], -1.7); }, {rnd(s23, 11)}},
      {"square", [](const Inputs& v) { return ad::square(v[0]); }, {rnd(s23, 12)}},
      {"exp", [](const Inputs& v) { return ad::exp(v[0]); }, {rnd(s23, 13)}},
      {"log", [](const Inputs& v) { return ad::log(v[0]); }, {rnd(s23, 14, 0.5, 2.0)}},
      {"erf", [](const Inputs& v) { return ad::erf(v[0]); }, {rnd(s23, 15)}},
      {"sigmoid", [](const Inputs& v) { return ad::sigmoid(v[0]); }, {rnd(s23, 16)}},
      {"tanh", [](const Inputs& v) { return ad::tanh(v[0]); }, {rnd(s23, 17)}},
      {"prelu", [](const Inputs& v) { return ad::prelu(v[0], v[1]); },
       {rnd({4, 5}, 18), rnd({1}, 19, 0.1, 0.4)}},
      {"reshape", [](const Inputs& v) { return ad::reshape(v[0], {3, 2}); }, {rnd(s23, 20)}},
      {"permute", [](const Inputs& v) { return ad::permute(v[0], {2, 0, 1}); },
       {rnd({2, 3, 4}, 21)}},
      {"concat", [](const Inputs& v) { return ad::concat<double>({v[0], v[1]}, 1); },
       {rnd({2, 3, 2}, 22), rnd({2, 1, 2}, 23)}},
      {"slice", [](const Inputs& v) { return ad::slice(v[0], 1, 1, 2); }, {rnd({2, 4, 3}, 24)}},
      {"sum", [](const Inputs& v) { return ad::sum(v[0]); }, {rnd(s23, 25)}},
      {"sum_axis", [](const Inputs& v) { return ad::sum(v[0], 1); }, {rnd({2, 3, 4}, 26)}},
      {"mean", [](const Inputs& v) { return ad::mean(v[0]); }, {rnd(s23, 27)}},
      {"mean_axis", [](const Inputs& v) { return ad::mean(v[0], 0); }, {rnd({2, 3, 4}, 28)}},
      {"var", [](const Inputs& v) { return ad::var(v[0]); }, {rnd({3, 4}, 29)}},
      {"matmul", [](const Inputs& v) { return ad::matmul(v[0], v[1]); },
       {rnd({3, 4}, 30), rnd({4, 2}, 31)}},
      {"conv2d",
       [conv](const Inputs& v) { return ad::conv2d(v[0], v[1], &v[2], conv); },
       {rnd({2, 2, 3, 6}, 32), rnd({3, 2, 2, 3}, 33), rnd({3}, 34)}},
      {"conv_transpose2d",
       [deconv](const Inputs& v) { return ad::conv_transpose2d(v[0], v[1], &v[2], deconv); },
       {rnd({1, 2, 3, 3}, 35), rnd({2, 2, 2, 5}, 36), rnd({2}, 37)}},
      {"batch_norm",
       [](const Inputs& v) {
         ad::BatchNormBuffers<double> buf{Tensor<double>({3}), Tensor<double>({3}, 1.0)};
         return ad::batch_norm(v[0], v[1], v[2], buf, true);
       },
       {rnd({2, 3, 2, 2}, 38), rnd({3}, 39, 0.5, 1.5), rnd({3}, 40)}},
      {"instance_norm_utterance",
       [](const Inputs& v) {
         return ad::instance_norm(v[0], v[1], v[2], ad::NormSpan::kUtterance);
       },
       {rnd({2, 2, 3, 4}, 41), rnd({2}, 42, 0.5, 1.5), rnd({2}, 43)}},
      {"instance_norm_causal",
       [](const Inputs& v) { return ad::instance_norm(v[0], v[1], v[2], ad::NormSpan::kCausal); },
       {rnd({2, 2, 3, 4}, 44), rnd({2}, 45, 0.5, 1.5), rnd({2}, 46)}},
      {"lstm", [](const Inputs& v) { return ad::lstm(v[0], v[1], v[2], v[3], false); },
       {rnd({2, 3, 2}, 47), rnd({2, 12}, 48, -0.5, 0.5), rnd({3, 12}, 49, -0.5, 0.5),
        rnd({12}, 50, -0.5, 0.5)}},
      {"lstm_reverse", [](const Inputs& v) { return ad::lstm(v[0], v[1], v[2], v[3], true); },
       {rnd({2, 3, 2}, 51), rnd({2, 12}, 52, -0.5, 0.5), rnd({3, 12}, 53, -0.5, 0.5),
        rnd({12}, 54, -0.5, 0.5)}},
      {"tap_filter", [](const Inputs& v) { return ad::tap_filter(v[0], v[1], 2, 3); },
       {rnd({1, 12, 3, 4}, 55), rnd({1, 2, 3, 4}, 56)}},
      {"istft", [small](const Inputs& v) { return dsp::istft(v[0], v[1], small); },
       {rnd({2, 3, 9}, 57), rnd({2, 3, 9}, 58)}},
      {"si_snr_loss",
       [ref = rnd({2, 16}, 60)](const Inputs& v) { return targets::si_snr_loss(v[0], VD(ref)); },
       {rnd({2, 16}, 59)}},
      {"complex_conv2d",
       [conv](const Inputs& v) {
         return flat(complex_conv2d(ComplexVar<double>{v[0], v[1]},
                                    ComplexWeight<double>{v[2], v[3], v[4], v[5]}, conv));
       },
       {rnd({1, 2, 3, 6}, 61), rnd({1, 2, 3, 6}, 62), rnd({2, 2, 2, 3}, 63),
        rnd({2, 2, 2, 3}, 64), rnd({2}, 65), rnd({2}, 66)}},
      {"complex_deconv2d",
       [deconv](const Inputs& v) {
         return flat(complex_deconv2d(ComplexVar<double>{v[0], v[1]},
                                      ComplexWeight<double>{v[2], v[3], v[4], v[5]}, deconv));
       },
       {rnd({1, 2, 2, 3}, 67), rnd({1, 2, 2, 3}, 68), rnd({2, 2, 2, 5}, 69),
        rnd({2, 2, 2, 5}, 70), rnd({2}, 71), rnd({2}, 72)}},
      {"clp",
       [](const Inputs& v) {
         return flat(clp(ComplexVar<double>{v[0], v[1]},
                         ComplexWeight<double>{v[2], v[3], v[4], v[5]}));
       },
       {rnd({2, 3, 4}, 73), rnd({2, 3, 4}, 74), rnd({4, 5}, 75), rnd({4, 5}, 76), rnd({5}, 77),
        rnd({5}, 78)}},
      {"split_bands",
       [sub](const Inputs& v) {
         return flat(split_bands(ComplexVar<double>{v[0], v[1]}, v[2], v[3], sub));
       },
       {rnd({1, 3, 8}, 79), rnd({1, 3, 8}, 80), rnd({2, 4, 4}, 81), rnd({2, 4, 4}, 82)}},
      {"merge_bands",
       [sub](const Inputs& v) {
         return flat(merge_bands(ComplexVar<double>{v[0], v[1]}, v[2], v[3], sub));
       },
       {rnd({1, 2, 3, 4}, 83), rnd({1, 2, 3, 4}, 84), rnd({8, 8}, 85), rnd({8, 8}, 86)}},
      {"normalize_bands",
       [](const Inputs& v) {
         BandNormWeights<double> w{v[2], v[3], v[4], v[5]};
         return flat(normalize_bands(ComplexVar<double>{v[0], v[1]}, w, ad::NormSpan::kCausal));
       },
       {rnd({1, 2, 3, 4}, 87), rnd({1, 2, 3, 4}, 88), rnd({2}, 89, 0.5, 1.5), rnd({2}, 90),
        rnd({2}, 91, 0.5, 1.5), rnd({2}, 92)}},
  };
  {
    TfLstmWeights<double> w;
    w.f_blstm = {lstm_weights(2, 3, 100), lstm_weights(2, 3, 103), lstm_weights(2, 3, 106),
                 lstm_weights(2, 3, 109)};
    w.clp_f = random_weight({6, 2}, 2, 112);
    w.t_lstm_re = lstm_weights(2, 3, 116);
    w.t_lstm_im = lstm_weights(2, 3, 119);
    w.clp_t = random_weight({3, 2}, 2, 122);
    cases.push_back({"complex_tf_lstm",
                     [w](const Inputs& v) {
                       return flat(complex_tf_lstm(ComplexVar<double>{v[0], v[1]}, w));
                     },
                     {rnd({2, 2, 3, 2}, 125), rnd({2, 2, 3, 2}, 126)}});
  }

  double worst = 0;
  std::string worst_name;
  for (const auto& c : cases) {
    const auto r = grad_check(c.f, c.in);
    if (r.max_rel_err > worst || !std::isfinite(r.max_rel_err)) {
      worst = std::isfinite(r.max_rel_err) ? r.max_rel_err : INFINITY;
      worst_name = c.name;
    }
  }
  const auto [model_err, param] = tiny_model_gradients();
  if (model_err > worst) {
    worst = model_err;
    worst_name = "tiny model (" + param + ")";
  }
  std::ostringstream d;
  d << cases.size() << " ops + tiny model, worst " << worst_name;
  return result("gradient suite", worst, 1e-4, d.str());
}

CheckResult complex_equivalence() {
  double worst = 0;
  std::string worst_name;
  auto note = [&](double e, const char* name) {
    if (e > worst) {
      worst = e;
      worst_name = name;
    }
  };
  {
    const std::size_t Ci = 2, Co = 3, TT = 4, F = 6, Kt = 2, Kf = 3, Fo = 3;
    auto x = random_complex({1, Ci, TT, F}, 1);
    auto w = random_weight({Co, Ci, Kt, Kf}, Co, 10);
    ad::Conv2dSpec spec;
    spec.pad_t_lo = 1;
    spec.pad_f_lo = spec.pad_f_hi = 1;
    spec.stride_f = 2;
    auto y = complex_conv2d(x, w, spec);
    std::vector<cd> ref(Co * TT * Fo);
    for (std::size_t o = 0; o < Co; ++o)
      for (std::size_t t = 0; t < TT; ++t)
        for (std::size_t f = 0; f < Fo; ++f) {
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
          ref[(o * TT + t) * Fo + f] = acc;
        }
    note(rel_err(values(y), ref), "conv");
  }
  {
    const std::size_t Ci = 2, Co = 2, TT = 3, F = 3, Kt = 2, Kf = 5;
    auto x = random_complex({1, Ci, TT, F}, 2);
    auto w = random_weight({Ci, Co, Kt, Kf}, Co, 20);
    ad::Conv2dSpec spec;
    spec.stride_f = 2;
    spec.pad_f_lo = spec.pad_f_hi = 2;
    spec.out_pad_f = 1;
    spec.pad_t_hi = 1;
    auto y = complex_deconv2d(x, w, spec);
    std::vector<cd> ref(Co * TT * 2 * F);
    for (std::size_t o = 0; o < Co; ++o)
      for (std::size_t n = 0; n < TT * 2 * F; ++n)
        ref[o * TT * 2 * F + n] = {w.bias_re.value()[o], w.bias_im.value()[o]};
    for (std::size_t c = 0; c < Ci; ++c)
      for (std::size_t t = 0; t < TT; ++t)
        for (std::size_t f = 0; f < F; ++f)
          for (std::size_t o = 0; o < Co; ++o)
            for (std::size_t i = 0; i < Kt; ++i)
              for (std::size_t j = 0; j < Kf; ++j) {
                const long to = static_cast<long>(t + i);
                const long fo = static_cast<long>(2 * f + j) - 2;
                if (to >= static_cast<long>(TT) || fo < 0 || fo >= static_cast<long>(2 * F))
                  continue;
                const std::size_t wi = ((c * Co + o) * Kt + i) * Kf + j;
                ref[(o * TT + to) * 2 * F + fo] +=
                    cd(w.re.value()[wi], w.im.value()[wi]) * at(x, (c * TT + t) * F + f);
              }
    note(rel_err(values(y), ref), "deconv");
  }
  {
    auto x = random_complex({2, 3, 4}, 3);
    auto w = random_weight({4, 5}, 5, 30);
    auto y = clp(x, w);
    std::vector<cd> ref(6 * 5);
    for (std::size_t r = 0; r < 6; ++r)
      for (std::size_t o = 0; o < 5; ++o) {
        cd acc{w.bias_re.value()[o], w.bias_im.value()[o]};
        for (std::size_t i = 0; i < 4; ++i)
          acc += at(x, r * 4 + i) * cd(w.re.value()[i * 5 + o], w.im.value()[i * 5 + o]);
        ref[r * 5 + o] = acc;
      }
    note(rel_err(values(y), ref), "clp");
  }
  {
    auto x = random_complex({2, 5, 3}, 4);
    auto wr = lstm_weights(3, 4, 40), wi = lstm_weights(3, 4, 43);
    auto y = complex_lstm(x, wr, wi);
    const auto hr = lstm_oracle(x.re.value(), wr), hi = lstm_oracle(x.im.value(), wi);
    std::vector<cd> ref(hr.size());
    for (std::size_t n = 0; n < ref.size(); ++n) ref[n] = {hr[n], hi[n]};
    note(rel_err(values(y), ref), "lstm");
  }
  return result("complex-arithmetic equivalence", worst, 1e-5, "worst op " + worst_name);
}

CheckResult stft_round_trip() {
  const dsp::FrameConfig cfg;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<float> x(16000 * 2);
  for (float& v : x) v = static_cast<float>(u(rng));
  const auto y = dsp::istft(dsp::stft<float>(x, cfg), cfg);
  double err = 0;
  for (std::size_t n = cfg.frame_len; n + cfg.frame_len < y.size(); ++n)
    err = std::max(err, std::abs(static_cast<double>(y[n]) - x[n]));
  return result("STFT round trip", err, 1e-5, "sqrt-Hann 320/160, FFT 512, 2 s float");
}

CheckResult subband_identity() {
  const SubbandConfig cfg{4, 256};
  const std::size_t K = 4, W = 64, N = 256, TT = 5;
  auto y = random_complex({1, TT, N}, 6);
  Tensor<double> are({K, W, W}), aim({K, W, W}), sre({1, N, N}), sim({1, N, N});
  identity_init(are, aim, 1, 0.0);
  identity_init(sre, sim, 2, 0.0);
  auto back = merge_bands(split_bands(y, VD(are), VD(aim), cfg), VD(sre.reshaped({N, N})),
                          VD(sim.reshaped({N, N})), cfg);
  const double id_err = rel_err(values(back), values(y));

  auto a = random_weight({K, W, W}, 1, 40);
  auto s = random_weight({N, N}, 1, 50);
  auto bands = split_bands(y, a.re, a.im, cfg);
  std::vector<cd> ref_split(K * TT * W);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t t = 0; t < TT; ++t)
      for (std::size_t f = 0; f < W; ++f) {
        cd acc = 0;
        for (std::size_t g = 0; g < W; ++g) {
          const std::size_t ai = (k * W + g) * W + f;
          acc += at(y, t * N + k * W + g) * cd(a.re.value()[ai], a.im.value()[ai]);
        }
        ref_split[(k * TT + t) * W + f] = acc;
      }
  auto merged = merge_bands(bands, s.re, s.im, cfg);
  std::vector<cd> ref_merge(TT * N);
  for (std::size_t t = 0; t < TT; ++t)
    for (std::size_t f = 0; f < N; ++f) {
      cd acc = 0;
      for (std::size_t g = 0; g < N; ++g)
        acc += ref_split[((g / W) * TT + t) * W + g % W] *
               cd(s.re.value()[g * N + f], s.im.value()[g * N + f]);
      ref_merge[t * N + f] = acc;
    }
  const double direct =
      std::max(rel_err(values(bands), ref_split), rel_err(values(merged), ref_merge));
  std::ostringstream d;
  d << "identity " << id_err << ", direct summation " << direct;
  return result("subband identity", std::max(id_err, direct), 1e-6, d.str());
}

CheckResult causality_latency() {
  // Largest output change at frames < t0 - 1 after perturbing input frame t0
  // (must be exactly zero), and the change at t0 - 1 (must not be).
  Model<double> m(ModelConfig::tiny());
  ad::NoGradGuard ng;
  const std::size_t TT = 10, F = 9;
  auto x = random_complex({1, TT, F}, 9);
  const auto a = m.forward(x, false);
  double leak = 0;
  bool lookahead_seen = true;
  for (std::size_t t0 = 2; t0 < TT; ++t0) {
    auto x2 = x;
    x2.re = VD(x.re.value());
    for (std::size_t f = 0; f < F; ++f) x2.re.mutable_value()[t0 * F + f] += 3.0;
    const auto b = m.forward(x2, false);
    double at_lookahead = 0;
    for (std::size_t t = 0; t < TT; ++t) {
      double d = 0;
      for (std::size_t f = 0; f < F; ++f)
        d += std::abs(at(a.enhanced, t * F + f) - at(b.enhanced, t * F + f));
      if (t + 1 < t0) leak = std::max(leak, d);
      if (t + 1 == t0) at_lookahead = d;
      if (t < t0) leak = std::max(leak, std::abs(a.snr.value()[t] - b.snr.value()[t]));
    }
    lookahead_seen = lookahead_seen && at_lookahead > 0;
  }
  Model<float> full(ModelConfig::full());
  StreamingEnhancer<float> se(full);
  std::vector<float> silence(full.config().frame.hop, 0.0f);
  for (int i = 0; i < 6; ++i) se.push(silence);
  const double ms = se.measured_latency_ms();
  const bool ok = leak == 0 && lookahead_seen && ms == 40.0;
  std::ostringstream d;
  d << "leak " << leak << ", look-ahead frame " << (lookahead_seen ? "used" : "unused")
    << ", latency " << ms << " ms (" << se.measured_latency_samples() << " samples)";
  auto r = result("causality and latency", ok ? 0.0 : 1.0, 0.5, d.str());
  r.value = ms;
  r.tolerance = 40.0;
  return r;
}

CheckResult streaming_equivalence(Model<float>& model, double seconds) {
  const auto& fc = model.config().frame;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.1);
  std::vector<float> x(static_cast<std::size_t>(seconds * fc.sample_rate));
  for (float& v : x) v = static_cast<float>(g(rng));
  const auto spec = dsp::stft<float>(x, fc);
  dsp::ComplexSpectrogram<float> off;
  {
    ad::NoGradGuard ng;
    off = from_batch(model.forward(as_batch(spec), false).enhanced);
  }
  const auto str = stream_spectrogram(model, spec);
  double d = 0;
  for (std::size_t i = 0; i < off.re.size(); ++i) {
    d = std::max(d, std::abs(static_cast<double>(off.re[i]) - str.re[i]));
    d = std::max(d, std::abs(static_cast<double>(off.im[i]) - str.im[i]));
  }
  std::ostringstream det;
  det << spec.frames() << " frames, " << model.count_params() << " parameters";
  return result("streaming equivalence", d, 1e-5, det.str());
}

CheckResult snr_labels() {
  using namespace targets;
  bool ok = kAlpha == 0.99 && kDelta == 30.0;
  // Two-utterance moving-average recursion against hand arithmetic.
  SnrLabelState st;
  const std::vector<double> u1{1.0, 3.0, 5.0, 7.0}, u2{-2.0, 2.0};
  st.update(u1);
  ok = ok && st.mu_hat == 4.0 && st.sigma_hat == std::sqrt(5.0);
  st.update(u2);
  ok = ok && st.mu_hat == 4.0 * 0.99 + 0.0 * (1 - 0.99) &&
       st.sigma_hat == std::sqrt(5.0) * 0.99 + 2.0 * (1 - 0.99);
  // Range and monotonicity over a raw-SNR sweep.
  std::vector<double> xi;
  for (int i = -60; i <= 60; ++i) xi.push_back(i * 0.5);
  const auto lab = snr_label_normalize_compress(xi, st);
  double worst_order = 0;
  for (std::size_t i = 0; i < lab.size(); ++i) {
    ok = ok && lab[i] > 0 && lab[i] < 1;
    if (i) worst_order = std::max(worst_order, lab[i - 1] - lab[i]);
  }
  ok = ok && worst_order <= 0;
  // Raw label against a direct energy ratio: clean = 10 x noise gives 20 dB.
  dsp::ComplexSpectrogram<double> c(3, 5), n(3, 5);
  for (std::size_t i = 0; i < 15; ++i) {
    c.re[i] = std::sin(1.0 + i);
    c.im[i] = std::cos(2.0 * i);
    n.re[i] = c.re[i] / 10;
    n.im[i] = c.im[i] / 10;
  }
  double raw_err = 0;
  for (double v : snr_label_raw(c, n)) raw_err = std::max(raw_err, std::abs(v - 20.0));
  ok = ok && raw_err < 1e-9;
  std::ostringstream d;
  d << "alpha " << kAlpha << ", delta " << kDelta << ", labels in (" << lab.front() << ", "
    << lab.back() << "), raw err " << raw_err;
  return result("SNR label pipeline", ok ? 0.0 : 1.0, 0.5, d.str());
}

CheckResult mmse_lsa() {
  using namespace postproc;
  double e1_err = 0;
  for (int i = 0; i <= 200; ++i) {
    const double v = 1e-6 * std::pow(50.0 / 1e-6, i / 200.0);
    const double ref = e1_quadrature(v);
    e1_err = std::max(e1_err, std::abs(expint_e1(v) - ref) / ref);
  }
  const double g = mmse_lsa_gain(1.0, 2.0);
  const double g_oracle = 0.5 * std::exp(0.5 * e1_quadrature(1.0));
  bool in_range = true;
  for (double xi : {0.0, 1e-8, 1e-3, 0.1, 1.0, 10.0, 1e4, 1e9})
    for (double gamma : {1e-8, 0.5, 1.0, 3.0, 100.0}) {
      const double v = mmse_lsa_gain(xi, gamma);
      in_range = in_range && v >= kGainFloor && v <= 1.0;
    }
  // Reset fires exactly when (xi(t) - xi(t-1)) / xi(t-1) > 1.
  SnrTrack tr;
  const double xis[] = {1.0, 2.0, 6.0, 6.0, 0.5, 1.5, 3.0000001, 6.0000002, 12.0000004};
  bool schedule = true;
  for (std::size_t t = 0; t < std::size(xis); ++t) {
    tr.update(1.0 + t, 1.0, 2.0);
    const bool expect = t > 0 && (xis[t] - xis[t - 1]) / xis[t - 1] > 1.0;
    schedule = schedule && tr.maybe_reset(xis[t]) == expect;
  }
  const bool ok = e1_err < 1e-9 && std::abs(g - g_oracle) < 1e-3 && std::abs(g - 0.558) < 1e-3 &&
                  in_range && schedule;
  std::ostringstream d;
  d << "E1 rel err " << e1_err << ", G(1, 2) = " << g << " (oracle " << g_oracle << "), range "
    << (in_range ? "ok" : "violated") << ", reset schedule " << (schedule ? "ok" : "wrong");
  auto r = result("MMSE-LSA post-filter", e1_err, 1e-9, d.str());
  r.passed = ok;
  return r;
}

CheckResult param_count() {
  Model<float> m(ModelConfig::full());
  const double n = static_cast<double>(m.count_params());
  const double dev = std::abs(n - 3.3e6) / 3.3e6;
  std::ostringstream d;
  d << static_cast<std::size_t>(n) << " parameters vs 3.3M";
  return result("parameter count", dev, 0.15, d.str());
}

CheckResult toy_overfit(std::size_t steps, std::size_t window) {
  auto cfg = train::TrainConfig::toy();
  cfg.batch = 5;
  cfg.val_size = 1;
  Model<float> m(ModelConfig::toy());
  train::Trainer<float> tr(m, cfg, train::synth::pools(5, 5, 5, 2.0, 16000, 21));
  const auto pairs = tr.draw_batch(0);
  std::vector<double> means;
  double acc = 0;
  for (std::size_t i = 1; i <= steps; ++i) {
    acc += tr.train_step(pairs).loss;
    if (i % window == 0) {
      means.push_back(acc / window);
      acc = 0;
    }
  }
  bool decreasing = means.size() >= 2;
  for (std::size_t i = 1; i < means.size(); ++i) decreasing = decreasing && means[i] < means[i - 1];
  double out = 0, in = 0;
  for (const auto& p : pairs) {
    const auto [o, n] = si_snr_pair(m, p);
    out += o / pairs.size();
    in += n / pairs.size();
  }
  std::ostringstream d;
  d.precision(4);
  d << steps << " steps, input " << in << " dB; " << window << "-step loss means";
  for (double v : means) d << ' ' << v;
  d << (decreasing ? " (strictly decreasing)" : " (NOT strictly decreasing)");
  CheckResult r;
  r.name = "toy overfit";
  r.value = out;
  r.tolerance = 10.0;
  r.passed = out > 10.0 && decreasing;
  r.detail = d.str();
  return r;
}

CheckResult generalization(std::size_t steps) {
  auto cfg = train::TrainConfig::toy();
  cfg.steps = steps;
  Model<float> m(ModelConfig::toy());
  train::Trainer<float> tr(m, cfg, train::synth::pools(40, 40, 20, 4.0, 16000, 5));
  tr.run(steps);
  const auto held = train::synth::pools(5, 5, 5, 4.0, 16000, 999);
  auto hc = cfg;
  hc.crop_seconds = 2.0;
  double imp = 0, in = 0;
  for (std::uint64_t i = 0; i < 5; ++i) {
    const auto [o, n] = si_snr_pair(m, train::dynamic_mix(held, hc, 1000 + i).mix);
    imp += (o - n) / 5;
    in += n / 5;
  }
  std::ostringstream d;
  d.precision(4);
  d << steps << " steps, 5 held-out mixtures, mean input " << in << " dB, final lr " << tr.lr();
  CheckResult r;
  r.name = "generalization";
  r.value = imp;
  r.tolerance = 3.0;
  r.passed = imp >= 3.0;
  r.detail = d.str();
  return r;
}

CheckResult bench_accounting(double seconds, std::string* report) {
  Model<float> m(ModelConfig::full());
  rtf::RtfOptions opt;
  opt.seconds = seconds;
  const auto rep = rtf::measure(m, opt);
  if (report) *report = rtf::format(rep);
  std::ostringstream d;
  d.precision(3);
  d << "RTF " << rep.rtf() << " single thread, median of " << rep.runs
    << " (published reference " << rtf::kPaperRtf << ", not asserted)";
  return result("bench stage accounting", rep.accounting_gap(), 0.05, d.str());
}

std::vector<CheckResult> quick_suite() {
  std::vector<CheckResult> out;
  out.push_back(timed(gradient_suite));
  out.push_back(timed(complex_equivalence));
  out.push_back(timed(stft_round_trip));
  out.push_back(timed(subband_identity));
  out.push_back(timed(causality_latency));
  out.push_back(timed([] {
    Model<float> toy(ModelConfig::toy());
    return streaming_equivalence(toy, 1.0);
  }));
  out.push_back(timed(snr_labels));
  out.push_back(timed(mmse_lsa));
  out.push_back(timed(param_count));
  return out;
}

}  // namespace dccrn::verify
