// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <cmath>

#include "dccrn/gradcheck.hpp"
#include "dccrn/stream.hpp"

using namespace dccrn;

namespace {

template <typename T>
dsp::ComplexSpectrogram<T> random_spec(std::size_t frames, std::size_t bins, std::uint64_t seed) {
  dsp::ComplexSpectrogram<T> s;
  s.re = random_tensor<T>({frames, bins}, seed);
  s.im = random_tensor<T>({frames, bins}, seed + 1);
  return s;
}

template <typename T>
dsp::ComplexSpectrogram<T> offline(Model<T>& m, const dsp::ComplexSpectrogram<T>& s) {
  ad::NoGradGuard ng;
  return from_batch(m.forward(as_batch(s), false).enhanced);
}

template <typename T>
double max_abs_diff(const dsp::ComplexSpectrogram<T>& a, const dsp::ComplexSpectrogram<T>& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.re.size(); ++i) {
    d = std::max(d, std::abs(static_cast<double>(a.re[i]) - b.re[i]));
    d = std::max(d, std::abs(static_cast<double>(a.im[i]) - b.im[i]));
  }
  return d;
}

// Non-trivial batch-norm buffers so eval mode is not the identity.
template <typename T>
void perturb_buffers(Model<T>& m) {
  std::uint64_t seed = 100;
  for (auto& [name, buf] : m.params().buffers()) {
    auto mean = random_tensor<T>(buf.running_mean.shape(), ++seed, -0.2, 0.2);
    auto var = random_tensor<T>(buf.running_var.shape(), ++seed, 0.5, 2.0);
    buf.running_mean = mean;
    buf.running_var = var;
  }
}

}  // namespace

TEST_CASE("streaming matches offline forward on the tiny model") {
  Model<double> m(ModelConfig::tiny());
  perturb_buffers(m);
  auto s = random_spec<double>(12, 9, 1);
  auto a = offline(m, s);
  auto b = stream_spectrogram(m, s);
  CHECK(max_abs_diff(a, b) < 1e-12);
}

TEST_CASE("streaming matches offline forward on the toy model in float") {
  Model<float> m(ModelConfig::toy());
  perturb_buffers(m);
  auto s = random_spec<float>(60, 257, 2);
  const double d = max_abs_diff(offline(m, s), stream_spectrogram(m, s));
  MESSAGE("max abs difference " << d);
  CHECK(d < 1e-5);
}

TEST_CASE("look-ahead accounting, ordering, reset") {
  Model<double> m(ModelConfig::tiny());
  StreamState<double> st(m);
  auto s = random_spec<double>(6, 9, 3);
  auto feed = [&](std::size_t t) {
    return st.process(t, std::span<const double>(s.re.ptr() + t * 9, 9),
                      std::span<const double>(s.im.ptr() + t * 9, 9));
  };
  CHECK_FALSE(feed(0).has_value());
  std::vector<SpectralFrame<double>> first;
  for (std::size_t t = 1; t < 6; ++t) {
    auto f = feed(t);
    REQUIRE(f.has_value());
    CHECK(f->index == t - 1);
    first.push_back(*f);
  }
  CHECK_THROWS_AS(feed(2), StateError);
  auto last = st.flush();
  REQUIRE(last.has_value());
  CHECK(last->index == 5);
  CHECK_FALSE(st.flush().has_value());
  CHECK(st.frames_out() == 6);

  st.reset();
  CHECK(st.frames_in() == 0);
  CHECK_FALSE(feed(0).has_value());
  for (std::size_t t = 1; t < 6; ++t) {
    auto f = feed(t);
    CHECK(f->re == first[t - 1].re);
    CHECK(f->im == first[t - 1].im);
  }
  std::vector<double> short_frame(8);
  CHECK_THROWS_AS(st.process(6, short_frame, short_frame), ShapeError);

  auto utt = ModelConfig::tiny();
  utt.input_norm = ad::NormSpan::kUtterance;
  Model<double> mu(utt);
  CHECK_THROWS_AS(StreamState<double>{mu}, StateError);
}

TEST_CASE("streaming post-filter matches the offline post-filter") {
  Model<double> m(ModelConfig::tiny());
  auto s = random_spec<double>(20, 9, 4);
  auto a = postproc::apply_postproc(offline(m, s), s);
  auto b = stream_spectrogram(m, s, true);
  CHECK(max_abs_diff(a, b) < 1e-12);
}

TEST_CASE("sample-domain streaming matches offline synthesis and has 40 ms latency") {
  Model<float> m(ModelConfig::toy());
  perturb_buffers(m);
  const auto& fc = m.config().frame;
  auto x = random_tensor<float>({16000 + 77}, 5);
  std::span<const float> xs(x.ptr(), x.size());

  auto spec = dsp::stft<float>(xs, fc);
  const auto ref = dsp::istft(offline(m, spec), fc);

  StreamingEnhancer<float> se(m);
  std::vector<float> y;
  for (std::size_t pos = 0; pos < x.size(); pos += fc.hop) {
    const std::size_t n = std::min(fc.hop, x.size() - pos);
    auto part = se.push(xs.subspan(pos, n));
    y.insert(y.end(), part.begin(), part.end());
  }
  auto tail = se.finish();
  y.insert(y.end(), tail.begin(), tail.end());
  REQUIRE(y.size() == ref.size());
  double d = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    d = std::max(d, std::abs(static_cast<double>(y[i]) - ref[i]));
  MESSAGE("waveform max abs difference " << d);
  CHECK(d < 1e-5);
  CHECK(se.measured_latency_samples() == 640);
  CHECK(se.measured_latency_ms() == doctest::Approx(40.0));
}
