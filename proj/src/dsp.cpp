// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dccrn/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <random>

#include "fft.hpp"

namespace dccrn::dsp {
namespace {

template <typename T>
const detail::RealFft<T>& fft_for(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::unique_ptr<detail::RealFft<T>>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<detail::RealFft<T>>(n);
  return *slot;
}

template <typename T>
const std::vector<T>& window_for(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::vector<T>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (slot.empty()) {
    auto w = sqrt_hann(n);
    slot.assign(w.begin(), w.end());
  }
  return slot;
}

}  // namespace

std::size_t FrameConfig::frames_for(std::size_t samples) const {
  if (samples < frame_len)
    throw ShapeError("input of " + std::to_string(samples) +
                     " samples is shorter than one frame (" + std::to_string(frame_len) + ")");
  return 1 + (samples - frame_len) / hop;
}

void FrameConfig::validate() const {
  if (frame_len == 0 || hop == 0 || fft_size < frame_len || sample_rate <= 0)
    throw ShapeError("invalid framing: frame " + std::to_string(frame_len) + ", hop " +
                     std::to_string(hop) + ", fft " + std::to_string(fft_size));
}

std::vector<double> sqrt_hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = std::sqrt(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / static_cast<double>(n)));
  return w;
}

template <typename T>
ComplexSpectrogram<T> stft(std::span<const T> samples, const FrameConfig& cfg) {
  cfg.validate();
  const std::size_t frames = cfg.frames_for(samples.size());
  const auto& fft = fft_for<T>(cfg.fft_size);
  const auto& win = window_for<T>(cfg.frame_len);
  ComplexSpectrogram<T> spec(frames, cfg.bins());
  std::vector<T> buf(cfg.fft_size);
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), T{0});
    for (std::size_t n = 0; n < cfg.frame_len; ++n) buf[n] = samples[t * cfg.hop + n] * win[n];
    fft.forward(buf.data(), spec.re.ptr() + t * cfg.bins(), spec.im.ptr() + t * cfg.bins());
  }
  return spec;
}

namespace {

// Inverse transform of one frame, windowed, added into out at offset.
template <typename T>
void synthesize_frame(const detail::RealFft<T>& fft, const std::vector<T>& win, const T* re,
                      const T* im, const FrameConfig& cfg, T* out, std::vector<T>& buf) {
  fft.inverse(re, im, buf.data());
  const T scale = T{1} / static_cast<T>(cfg.fft_size);
  for (std::size_t n = 0; n < cfg.frame_len; ++n) out[n] += buf[n] * scale * win[n];
}

}  // namespace

template <typename T>
std::vector<T> istft(const ComplexSpectrogram<T>& spec, const FrameConfig& cfg) {
  cfg.validate();
  if (spec.re.rank() != 2 || spec.re.shape() != spec.im.shape() || spec.bins() != cfg.bins())
    throw ShapeError("istft: spectrogram " + shape_str(spec.re.shape()) + " does not match " +
                     std::to_string(cfg.bins()) + " bins");
  if (spec.frames() == 0) return {};
  const auto& fft = fft_for<T>(cfg.fft_size);
  const auto& win = window_for<T>(cfg.frame_len);
  std::vector<T> out(cfg.samples_for(spec.frames()), T{0});
  std::vector<T> buf(cfg.fft_size);
  for (std::size_t t = 0; t < spec.frames(); ++t)
    synthesize_frame(fft, win, spec.re.ptr() + t * cfg.bins(), spec.im.ptr() + t * cfg.bins(),
                     cfg, out.data() + t * cfg.hop, buf);
  return out;
}

template <typename T>
ad::Var<T> istft(const ad::Var<T>& re, const ad::Var<T>& im, const FrameConfig& cfg) {
  cfg.validate();
  if (re.shape().size() != 3 || re.shape() != im.shape() || re.dim(2) != cfg.bins())
    throw ShapeError("istft: expected [B, T, " + std::to_string(cfg.bins()) + "], got " +
                     shape_str(re.shape()));
  const std::size_t B = re.dim(0), TT = re.dim(1), F = cfg.bins();
  if (TT == 0) throw ShapeError("istft: no frames");
  const std::size_t L = cfg.samples_for(TT);
  const auto& fft = fft_for<T>(cfg.fft_size);
  const auto& win = window_for<T>(cfg.frame_len);
  Tensor<T> out({B, L});
  std::vector<T> buf(cfg.fft_size);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < TT; ++t)
      synthesize_frame(fft, win, re.value().ptr() + (b * TT + t) * F,
                       im.value().ptr() + (b * TT + t) * F, cfg, out.ptr() + b * L + t * cfg.hop,
                       buf);
  return ad::make_op<T>(std::move(out), {re, im}, "istft", [cfg, B, TT, F, L](ad::Node<T>& self) {
    const auto& fft = fft_for<T>(cfg.fft_size);
    const auto& win = window_for<T>(cfg.frame_len);
    const bool g_re = self.parents[0]->requires_grad, g_im = self.parents[1]->requires_grad;
    T* dre = g_re ? self.parents[0]->grad_buffer().ptr() : nullptr;
    T* dim = g_im ? self.parents[1]->grad_buffer().ptr() : nullptr;
    std::vector<T> frame(cfg.fft_size, T{0}), gr(F), gi(F);
    const T inv_n = T{1} / static_cast<T>(cfg.fft_size);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < TT; ++t) {
        const T* g = self.grad.ptr() + b * L + t * cfg.hop;
        for (std::size_t n = 0; n < cfg.frame_len; ++n) frame[n] = g[n] * win[n];
        fft.forward(frame.data(), gr.data(), gi.data());
        // Interior bins appear twice in the real inverse; DC and Nyquist once.
        for (std::size_t k = 0; k < F; ++k) {
          const bool edge = k == 0 || (cfg.fft_size % 2 == 0 && k == F - 1);
          const T w = (edge ? T{1} : T{2}) * inv_n;
          if (dre) dre[(b * TT + t) * F + k] += w * gr[k];
          if (dim) dim[(b * TT + t) * F + k] += w * gi[k];
        }
      }
  });
}

template <typename T>
double windowed_frame_energy(std::span<const T> samples, std::size_t frame,
                             const FrameConfig& cfg) {
  const auto& win = window_for<T>(cfg.frame_len);
  double e = 0;
  for (std::size_t n = 0; n < cfg.frame_len; ++n) {
    const double v = static_cast<double>(samples[frame * cfg.hop + n]) * win[n];
    e += v * v;
  }
  return e;
}

template <typename T>
double spectral_frame_energy(const ComplexSpectrogram<T>& spec, std::size_t frame,
                             const FrameConfig& cfg) {
  double e = 0;
  const std::size_t F = spec.bins();
  for (std::size_t k = 0; k < F; ++k) {
    const double re = spec.re[frame * F + k], im = spec.im[frame * F + k];
    const bool edge = k == 0 || (cfg.fft_size % 2 == 0 && k == F - 1);
    e += (edge ? 1.0 : 2.0) * (re * re + im * im);
  }
  return e / static_cast<double>(cfg.fft_size);
}

double mean_power(std::span<const float> x) {
  if (x.empty()) return 0;
  double acc = 0;
  for (float v : x) acc += static_cast<double>(v) * v;
  return acc / static_cast<double>(x.size());
}

Mixture mix_at_snr(const Waveform& speech, const Waveform& noise, double snr_db) {
  if (speech.samples.empty() || noise.samples.empty())
    throw DataError("mix_at_snr: empty input");
  const double ps = mean_power(speech.samples);
  if (!(ps > 0)) throw DataError("mix_at_snr: speech is silent");
  std::vector<float> looped(speech.size());
  for (std::size_t i = 0; i < looped.size(); ++i) looped[i] = noise.samples[i % noise.size()];
  const double pn = mean_power(looped);
  if (!(pn > 0)) throw DataError("mix_at_snr: noise is silent");
  const double gain = std::sqrt(ps / (pn * std::pow(10.0, snr_db / 10.0)));
  Mixture m;
  m.clean = speech;
  m.noise = Waveform{std::vector<float>(speech.size()), speech.sample_rate};
  m.noisy = Waveform{std::vector<float>(speech.size()), speech.sample_rate};
  for (std::size_t i = 0; i < looped.size(); ++i) {
    m.noise.samples[i] = static_cast<float>(gain * looped[i]);
    m.noisy.samples[i] = speech.samples[i] + m.noise.samples[i];
  }
  return m;
}

Waveform convolve_rir(const Waveform& speech, const Waveform& rir) {
  if (rir.samples.empty()) throw DataError("convolve_rir: empty impulse response");
  if (rir.size() >= speech.size())
    throw ShapeError("convolve_rir: impulse response (" + std::to_string(rir.size()) +
                     ") must be shorter than the speech (" + std::to_string(speech.size()) + ")");
  const std::size_t n = speech.size();
  std::size_t nfft = 1;
  while (nfft < n + rir.size() - 1) nfft <<= 1;
  const auto& fft = fft_for<double>(nfft);
  std::vector<double> a(nfft, 0.0), b(nfft, 0.0);
  std::copy(speech.samples.begin(), speech.samples.end(), a.begin());
  std::copy(rir.samples.begin(), rir.samples.end(), b.begin());
  const std::size_t bins = nfft / 2 + 1;
  std::vector<double> ar(bins), ai(bins), br(bins), bi(bins);
  fft.forward(a.data(), ar.data(), ai.data());
  fft.forward(b.data(), br.data(), bi.data());
  for (std::size_t k = 0; k < bins; ++k) {
    const double r = ar[k] * br[k] - ai[k] * bi[k];
    const double i = ar[k] * bi[k] + ai[k] * br[k];
    ar[k] = r;
    ai[k] = i;
  }
  fft.inverse(ar.data(), ai.data(), a.data());
  double dry_peak = 0, wet_peak = 0;
  for (std::size_t i = 0; i < n; ++i) {
    a[i] /= static_cast<double>(nfft);
    dry_peak = std::max(dry_peak, std::abs(static_cast<double>(speech.samples[i])));
    wet_peak = std::max(wet_peak, std::abs(a[i]));
  }
  const double scale = wet_peak > 0 ? dry_peak / wet_peak : 0.0;
  Waveform out{std::vector<float>(n), speech.sample_rate};
  for (std::size_t i = 0; i < n; ++i) out.samples[i] = static_cast<float>(a[i] * scale);
  return out;
}

bool BiquadCoeffs::stable() const {
  // Poles of z^2 + a1 z + a2 inside the unit circle.
  return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2;
}

Waveform apply_biquad(const Waveform& w, const BiquadCoeffs& c) {
  Waveform out{std::vector<float>(w.size()), w.sample_rate};
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double x = w.samples[i];
    const double y = c.b0 * x + c.b1 * x1 + c.b2 * x2 - c.a1 * y1 - c.a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = y;
    out.samples[i] = static_cast<float>(y);
  }
  return out;
}

BiquadCoeffs draw_biquad(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-kBiquadRange, kBiquadRange);
  BiquadCoeffs c;
  for (int attempt = 0; attempt < 16; ++attempt) {
    c.a1 = u(rng);
    c.a2 = u(rng);
    c.b1 = u(rng);
    c.b2 = u(rng);
    if (c.stable()) return c;
  }
  throw NumericError("draw_biquad: no stable filter after 16 draws");
}

Waveform biquad_augment(const Waveform& w, std::uint64_t seed) {
  return apply_biquad(w, draw_biquad(seed));
}

// ---- WAV ---------------------------------------------------------------------

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
void put_u32(std::vector<unsigned char>& o, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) o.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put_u16(std::vector<unsigned char>& o, std::uint16_t v) {
  o.push_back(static_cast<unsigned char>(v));
  o.push_back(static_cast<unsigned char>(v >> 8));
}

}  // namespace

Waveform wav_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw WavHeaderError(path.string() + ": not a RIFF/WAVE file");
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t len = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16 || body + len > bytes.size())
        throw WavHeaderError(path.string() + ": truncated fmt chunk");
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      if (format == 0xFFFE && len >= 26) format = read_u16(bytes.data() + body + 24);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw WavHeaderError(path.string() + ": data chunk before fmt chunk");
      if (channels != 1)
        throw WavFormatError(path.string() + ": " + std::to_string(channels) +
                             " channels; only mono audio is supported");
      const bool pcm16 = format == 1 && bits == 16;
      const bool f32 = format == 3 && bits == 32;
      if (!pcm16 && !f32)
        throw WavFormatError(path.string() + ": unsupported encoding (format " +
                             std::to_string(format) + ", " + std::to_string(bits) + " bits)");
      if (body + len > bytes.size())
        throw WavHeaderError(path.string() + ": truncated data chunk");
      const std::size_t width = bits / 8;
      Waveform w{std::vector<float>(len / width), static_cast<int>(rate)};
      for (std::size_t i = 0; i < w.size(); ++i) {
        const unsigned char* p = bytes.data() + body + i * width;
        if (pcm16) {
          w.samples[i] = static_cast<float>(static_cast<std::int16_t>(read_u16(p))) / 32768.0f;
        } else {
          const std::uint32_t u = read_u32(p);
          std::memcpy(&w.samples[i], &u, 4);
        }
      }
      return w;
    }
    pos = body + len + (len & 1);
  }
  throw WavHeaderError(path.string() + ": missing " + (have_fmt ? "data" : "fmt") + " chunk");
}

void wav_write(const std::filesystem::path& path, const Waveform& w, WavEncoding encoding) {
  const bool f32 = encoding == WavEncoding::kFloat32;
  const std::uint16_t bits = f32 ? 32 : 16;
  const std::uint32_t data_len = static_cast<std::uint32_t>(w.size() * (bits / 8));
  std::vector<unsigned char> o;
  o.reserve(44 + data_len);
  for (char ch : std::string("RIFF")) o.push_back(static_cast<unsigned char>(ch));
  put_u32(o, 36 + data_len);
  for (char ch : std::string("WAVEfmt ")) o.push_back(static_cast<unsigned char>(ch));
  put_u32(o, 16);
  put_u16(o, f32 ? 3 : 1);
  put_u16(o, 1);
  put_u32(o, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(o, static_cast<std::uint32_t>(w.sample_rate) * (bits / 8));
  put_u16(o, bits / 8);
  put_u16(o, bits);
  for (char ch : std::string("data")) o.push_back(static_cast<unsigned char>(ch));
  put_u32(o, data_len);
  for (float v : w.samples) {
    if (f32) {
      std::uint32_t u;
      std::memcpy(&u, &v, 4);
      put_u32(o, u);
    } else {
      const double c = std::clamp(static_cast<double>(v), -1.0, 32767.0 / 32768.0);
      put_u16(o, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32768.0))));
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(o.data()), static_cast<std::streamsize>(o.size()));
}

template ComplexSpectrogram<float> stft<float>(std::span<const float>, const FrameConfig&);
template ComplexSpectrogram<double> stft<double>(std::span<const double>, const FrameConfig&);
template std::vector<float> istft<float>(const ComplexSpectrogram<float>&, const FrameConfig&);
template std::vector<double> istft<double>(const ComplexSpectrogram<double>&,
                                           const FrameConfig&);
template ad::Var<float> istft<float>(const ad::Var<float>&, const ad::Var<float>&,
                                     const FrameConfig&);
template ad::Var<double> istft<double>(const ad::Var<double>&, const ad::Var<double>&,
                                       const FrameConfig&);
template double windowed_frame_energy<float>(std::span<const float>, std::size_t,
                                             const FrameConfig&);
template double windowed_frame_energy<double>(std::span<const double>, std::size_t,
                                              const FrameConfig&);
template double spectral_frame_energy<float>(const ComplexSpectrogram<float>&, std::size_t,
                                             const FrameConfig&);
template double spectral_frame_energy<double>(const ComplexSpectrogram<double>&, std::size_t,
                                              const FrameConfig&);

}  // namespace dccrn::dsp
