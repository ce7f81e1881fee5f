// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "dccrn/dsp.hpp"
#include "dccrn/gradcheck.hpp"

using namespace dccrn;
using namespace dccrn::dsp;

namespace {

std::vector<float> noise(std::size_t n, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<float> x(n);
  for (auto& v : x) v = static_cast<float>(u(rng));
  return x;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("dccrn_test_" + name);
}

}  // namespace

TEST_CASE("stft framing") {
  FrameConfig cfg;
  std::vector<float> x(16000, 0.0f);
  auto s = stft<float>(x, cfg);
  CHECK(s.frames() == 99);
  CHECK(s.bins() == 257);
  for (float v : s.re.data()) CHECK(v == 0.0f);
  std::vector<float> short_input(319);
  CHECK_THROWS_AS(stft<float>(short_input, cfg), ShapeError);
}

TEST_CASE("1 kHz tone peaks at bin 32 and matches a direct DFT") {
  FrameConfig cfg;
  std::vector<double> x(320);
  for (std::size_t n = 0; n < x.size(); ++n)
    x[n] = std::sin(2 * std::numbers::pi * 1000 * n / 16000.0);
  auto s = stft<double>(x, cfg);
  std::size_t best = 0;
  double best_mag = 0;
  for (std::size_t k = 0; k < 257; ++k) {
    const double m = std::hypot(s.re[k], s.im[k]);
    if (m > best_mag) {
      best_mag = m;
      best = k;
    }
  }
  CHECK(best == 32);
  const auto w = sqrt_hann(320);
  for (std::size_t k : {0u, 17u, 32u, 100u, 256u}) {
    std::complex<double> acc = 0;
    for (std::size_t n = 0; n < 320; ++n)
      acc += x[n] * w[n] * std::polar(1.0, -2 * std::numbers::pi * k * n / 512.0);
    CHECK(std::abs(acc.real() - s.re[k]) < 1e-9);
    CHECK(std::abs(acc.imag() - s.im[k]) < 1e-9);
  }
}

TEST_CASE("istft round trip and degenerate cases") {
  FrameConfig cfg;
  auto x = noise(16000, 1, 1.0);
  auto y = istft(stft<float>(x, cfg), cfg);
  double err = 0;
  for (std::size_t n = cfg.hop; n + cfg.hop < y.size(); ++n)
    err = std::max(err, std::abs(static_cast<double>(y[n]) - x[n]));
  CHECK(err < 1e-5);

  ComplexSpectrogram<float> zero(4, 257);
  for (float v : istft(zero, cfg)) CHECK(v == 0.0f);

  std::vector<double> frame(320, 1.0);
  auto single = istft(stft<double>(frame, cfg), cfg);
  const auto w = sqrt_hann(320);
  REQUIRE(single.size() == 320);
  for (std::size_t n = 0; n < 320; ++n) CHECK(single[n] == doctest::Approx(w[n] * w[n]));
}

TEST_CASE("Parseval between windowed frame and spectrum") {
  FrameConfig cfg;
  auto x = noise(4000, 2);
  auto s = stft<float>(x, cfg);
  for (std::size_t t : {0u, 5u, 20u}) {
    const double et = windowed_frame_energy<float>(x, t, cfg);
    const double ef = spectral_frame_energy(s, t, cfg);
    CHECK(std::abs(et - ef) / et < 1e-4);
  }
}

TEST_CASE("differentiable istft matches the plain one and has correct gradients") {
  FrameConfig small{8, 4, 16, 16000};
  auto re = random_tensor<double>({2, 3, 9}, 3);
  auto im = random_tensor<double>({2, 3, 9}, 4);
  auto r = grad_check(
      [&](const std::vector<ad::Var<double>>& v) { return istft(v[0], v[1], small); }, {re, im});
  CHECK(r.max_rel_err < 1e-4);

  ComplexSpectrogram<double> spec(3, 9);
  for (std::size_t i = 0; i < 27; ++i) {
    spec.re[i] = re[i];
    spec.im[i] = im[i];
  }
  auto plain = istft(spec, small);
  auto batched = istft(ad::Var<double>(re), ad::Var<double>(im), small).value();
  for (std::size_t n = 0; n < plain.size(); ++n) CHECK(plain[n] == batched[n]);
}

TEST_CASE("mix at snr") {
  Waveform s{noise(8000, 5), 16000}, n{noise(3000, 6, 0.1), 16000};
  for (double snr : {-5.0, 0.0, 20.0}) {
    auto m = mix_at_snr(s, n, snr);
    const double measured =
        10 * std::log10(mean_power(m.clean.samples) / mean_power(m.noise.samples));
    CHECK(std::abs(measured - snr) < 1e-6);
    for (std::size_t i = 0; i < 100; ++i)
      CHECK(m.noisy.samples[i] == m.clean.samples[i] + m.noise.samples[i]);
  }
  Waveform silent{std::vector<float>(100, 0.0f), 16000};
  CHECK_THROWS_AS(mix_at_snr(silent, n, 0.0), DataError);
  CHECK_THROWS_AS(mix_at_snr(s, silent, 0.0), DataError);
}

TEST_CASE("rir convolution") {
  Waveform s{noise(1000, 7), 16000};
  Waveform delta{{1.0f}, 16000};
  auto same = convolve_rir(s, delta);
  for (std::size_t i = 0; i < s.size(); ++i)
    CHECK(same.samples[i] == doctest::Approx(s.samples[i]).epsilon(1e-5));

  Waveform shifted{{0, 0, 0, 1.0f}, 16000};
  auto d = convolve_rir(s, shifted);
  for (std::size_t i = 3; i < s.size(); ++i)
    CHECK(d.samples[i] == doctest::Approx(s.samples[i - 3]).epsilon(1e-5));

  Waveform two{{0.8f, 0.0f, -0.5f}, 16000};
  auto r = convolve_rir(s, two);
  std::vector<double> direct(s.size());
  double dry = 0, wet = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    direct[i] = 0.8 * s.samples[i] - (i >= 2 ? 0.5 * s.samples[i - 2] : 0.0);
    dry = std::max(dry, std::abs(static_cast<double>(s.samples[i])));
    wet = std::max(wet, std::abs(direct[i]));
  }
  for (std::size_t i = 0; i < s.size(); ++i)
    CHECK(std::abs(r.samples[i] - direct[i] * dry / wet) < 1e-5);

  CHECK_THROWS_AS(convolve_rir(s, Waveform{{}, 16000}), DataError);
}

TEST_CASE("biquad") {
  Waveform x{noise(500, 8), 16000};
  auto id = apply_biquad(x, BiquadCoeffs{});
  CHECK(id.samples == x.samples);
  CHECK(biquad_augment(x, 42).samples == biquad_augment(x, 42).samples);

  BiquadCoeffs c{1.0, 0.2, -0.1, -0.3, 0.25};
  Waveform imp{std::vector<float>(20, 0.0f), 16000};
  imp.samples[0] = 1.0f;
  auto h = apply_biquad(imp, c);
  std::vector<double> ref(20);
  for (std::size_t n = 0; n < 20; ++n) {
    ref[n] = n == 0 ? c.b0 : n == 1 ? c.b1 : n == 2 ? c.b2 : 0.0;
    if (n >= 1) ref[n] -= c.a1 * ref[n - 1];
    if (n >= 2) ref[n] -= c.a2 * ref[n - 2];
  }
  for (std::size_t n = 0; n < 20; ++n)
    CHECK(h.samples[n] == doctest::Approx(ref[n]).epsilon(1e-6));

  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto d = draw_biquad(seed);
    CHECK(d.stable());
    CHECK(std::abs(d.a1) <= kBiquadRange);
    CHECK(d.b0 == 1.0);
  }
}

TEST_CASE("wav round trips and errors") {
  Waveform w{noise(1234, 9, 0.9), 16000};
  const auto pf = temp_path("f32.wav");
  wav_write(pf, w, WavEncoding::kFloat32);
  CHECK(wav_read(pf).samples == w.samples);

  const auto pi = temp_path("pcm16.wav");
  wav_write(pi, w, WavEncoding::kPcm16);
  auto r = wav_read(pi);
  REQUIRE(r.size() == w.size());
  CHECK(r.sample_rate == 16000);
  for (std::size_t i = 0; i < w.size(); ++i)
    CHECK(std::abs(r.samples[i] - w.samples[i]) <= 1.0 / 32768);

  const auto pt = temp_path("trunc.wav");
  {
    std::ifstream in(pf, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(pt, std::ios::binary);
    out.write(bytes.data(), 30);
  }
  CHECK_THROWS_AS(wav_read(pt), WavHeaderError);

  const auto ps = temp_path("stereo.wav");
  {
    wav_write(ps, w, WavEncoding::kPcm16);
    std::fstream f(ps, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(22);
    const char two[2] = {2, 0};
    f.write(two, 2);
  }
  CHECK_THROWS_AS(wav_read(ps), WavFormatError);
  CHECK_THROWS_AS(wav_read(temp_path("missing.wav")), DataError);
  for (const auto& p : {pf, pi, pt, ps}) std::filesystem::remove(p);
}
