// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Audio front end: framing, STFT/iSTFT, WAV I/O and the data-simulation
// primitives used by the trainer.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dccrn/autodiff.hpp"
#include "dccrn/tensor.hpp"

namespace dccrn::dsp {

struct Waveform {
  std::vector<float> samples;
  int sample_rate = 16000;

  std::size_t size() const { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

// 20 ms sqrt-Hann frames every 10 ms, zero padded to a 512-point FFT.
struct FrameConfig {
  std::size_t frame_len = 320;
  std::size_t hop = 160;
  std::size_t fft_size = 512;
  int sample_rate = 16000;

  std::size_t bins() const { return fft_size / 2 + 1; }
  std::size_t frames_for(std::size_t samples) const;
  std::size_t samples_for(std::size_t frames) const { return (frames - 1) * hop + frame_len; }
  void validate() const;
  bool operator==(const FrameConfig&) const = default;
};

// T x F complex frames; re and im are [T, F].
template <typename T>
struct ComplexSpectrogram {
  Tensor<T> re;
  Tensor<T> im;

  ComplexSpectrogram() = default;
  ComplexSpectrogram(std::size_t frames, std::size_t bins)
      : re({frames, bins}), im({frames, bins}) {}

  std::size_t frames() const { return re.dim(0); }
  std::size_t bins() const { return re.dim(1); }
};

// Periodic sqrt-Hann of length n; its square overlap-adds to one at hop n/2.
std::vector<double> sqrt_hann(std::size_t n);

template <typename T>
ComplexSpectrogram<T> stft(std::span<const T> samples, const FrameConfig& cfg);

// Overlap-add with the synthesis window; length samples_for(frames).
template <typename T>
std::vector<T> istft(const ComplexSpectrogram<T>& spec, const FrameConfig& cfg);

// Differentiable batched iSTFT: re/im [B, T, F] -> [B, samples_for(T)].
template <typename T>
ad::Var<T> istft(const ad::Var<T>& re, const ad::Var<T>& im, const FrameConfig& cfg);

// Energy of one windowed time frame and of its one-sided spectrum divided by
// the FFT size; equal by Parseval.
template <typename T>
double windowed_frame_energy(std::span<const T> samples, std::size_t frame,
                             const FrameConfig& cfg);
template <typename T>
double spectral_frame_energy(const ComplexSpectrogram<T>& spec, std::size_t frame,
                             const FrameConfig& cfg);

struct Mixture {
  Waveform noisy;
  Waveform clean;
  Waveform noise;  // scaled noise actually added
};

double mean_power(std::span<const float> x);

// noisy = speech + g * noise with g chosen so that the speech to scaled noise
// power ratio equals snr_db. Noise is looped or truncated to speech length.
Mixture mix_at_snr(const Waveform& speech, const Waveform& noise, double snr_db);

// Linear convolution truncated to the speech length, rescaled to the dry peak.
Waveform convolve_rir(const Waveform& speech, const Waveform& rir);

struct BiquadCoeffs {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
  bool stable() const;
};

inline constexpr double kBiquadRange = 0.375;

// Direct-form I second-order section.
Waveform apply_biquad(const Waveform& w, const BiquadCoeffs& c);

// Random coefficients a1, a2, b1, b2 ~ U[-0.375, 0.375], b0 = 1, drawn from
// seed. Unstable draws are redrawn up to 16 times.
BiquadCoeffs draw_biquad(std::uint64_t seed);
Waveform biquad_augment(const Waveform& w, std::uint64_t seed);

// ---- WAV ---------------------------------------------------------------------

class WavHeaderError : public DataError {
 public:
  using DataError::DataError;
};

class WavFormatError : public DataError {
 public:
  using DataError::DataError;
};

enum class WavEncoding { kPcm16, kFloat32 };

// Mono 16-bit PCM or 32-bit float. Multi-channel files are rejected.
Waveform wav_read(const std::filesystem::path& path);
void wav_write(const std::filesystem::path& path, const Waveform& w,
               WavEncoding encoding = WavEncoding::kFloat32);

}  // namespace dccrn::dsp
