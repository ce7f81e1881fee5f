// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// DCCRN+ network:
//
//   noisy [B, T, bins] -> drop DC -> split into K bands -> causal instance norm
//   -> complex encoder (stride 2 in frequency, one past frame in time)
//   -> complex TF-LSTM -> complex decoder fed by 1x1 conv pathways
//   -> per-band deep-filter taps -> filter the un-normalized bands
//   -> merge -> DC reattached as zero.
//
// An SNR head (LSTM, causal Conv1D, sigmoid) reads the TF-LSTM output.
//
// Channel counts are complex totals: a layer listed with 32 channels has 16
// real and 16 imaginary feature maps. Only the last decoder layer looks one
// frame ahead.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dccrn/complex.hpp"
#include "dccrn/dsp.hpp"
#include "dccrn/params.hpp"
#include "dccrn/subband.hpp"

namespace dccrn {

struct ModelConfig {
  dsp::FrameConfig frame;
  std::size_t bands = 4;
  std::vector<std::size_t> channels{32, 64, 128, 256};
  std::size_t kernel_t = 2;
  std::size_t kernel_f = 5;
  std::size_t stride_f = 2;
  std::size_t rnn_units = 256;  // per part; per direction in the F-BLSTM
  std::size_t snr_units = 64;
  std::size_t snr_kernel = 3;
  std::size_t df_taps_t = 2;
  std::size_t df_taps_f = 3;
  ad::NormSpan input_norm = ad::NormSpan::kCausal;
  std::uint64_t seed = 1;

  static ModelConfig full() { return {}; }
  // Reduced width for desk-scale training.
  static ModelConfig toy();
  // 16-point FFT, two layers; small enough for exhaustive gradient checks.
  static ModelConfig tiny();

  std::size_t net_bins() const { return frame.bins() - 1; }
  std::size_t band_width() const { return net_bins() / bands; }
  std::size_t depth() const { return channels.size(); }
  std::size_t part(std::size_t layer) const { return channels.at(layer) / 2; }
  std::size_t taps() const { return df_taps_t * df_taps_f; }
  // Frequency extent after encoder layer l (l = depth() gives the bottleneck).
  std::size_t bins_after(std::size_t layer) const;
  SubbandConfig subband() const { return {bands, net_bins()}; }
  void validate() const;

  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& kv);
  bool operator==(const ModelConfig&) const = default;
};

// Wall-clock seconds per stage of one forward pass.
struct StageTimes {
  double stft = 0, subband = 0, encoder = 0, tf_lstm = 0, snr_head = 0, decoder = 0, postproc = 0;
  double total = 0;
  double sum() const { return stft + subband + encoder + tf_lstm + snr_head + decoder + postproc; }
};

template <typename T>
struct ModelOutput {
  ComplexVar<T> enhanced;  // [B, T, bins]
  ad::Var<T> snr;          // [B, T], in (0, 1)
  ComplexVar<T> bottleneck;
};

// Batch norm on real and imaginary planes separately, then one PReLU slope
// per plane.
template <typename T>
struct ComplexNorm {
  ad::Var<T> gamma_re, beta_re, gamma_im, beta_im;
  ad::BatchNormBuffers<T>* buf_re = nullptr;
  ad::BatchNormBuffers<T>* buf_im = nullptr;
  ad::Var<T> slope_re, slope_im;  // undefined: no activation
};

template <typename T>
struct ConvLayer {
  ComplexWeight<T> w;
  ComplexNorm<T> norm;
  bool has_norm = true;
};

template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& cfg);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }
  std::size_t count_params() const { return params_.count_scalars(); }

  // noisy [B, T, bins]. Training mode uses batch statistics in batch norm
  // and updates the running buffers.
  ModelOutput<T> forward(const ComplexVar<T>& noisy, bool training,
                         StageTimes* times = nullptr);

  // ---- building blocks (shared with the streaming engine) ----
  // noisy [B, T, bins] -> un-normalized bands [B, K, T, W].
  ComplexVar<T> analysis(const ComplexVar<T>& noisy);
  ComplexVar<T> normalize(const ComplexVar<T>& bands);
  // Encoder layer l with the given time padding (offline: one past frame).
  ComplexVar<T> encode(std::size_t l, const ComplexVar<T>& x, bool training,
                       std::size_t pad_t_lo);
  ComplexVar<T> pathway(std::size_t l, const ComplexVar<T>& e, bool training);
  // Decoder layer mirroring encoder layer l; input already holds the skip.
  ComplexVar<T> decode(std::size_t l, const ComplexVar<T>& x, bool training,
                       std::size_t pad_t_lo, std::size_t pad_t_hi);
  ad::Var<T> snr_head(const ComplexVar<T>& bottleneck);
  // Filtered bands merged back to [B, T, bins] with a zero DC bin.
  ComplexVar<T> synthesis(const ComplexVar<T>& mask, const ComplexVar<T>& bands);

  // L2 norm of each stage output of the last training-mode forward call, in
  // order (empty after an inference call). The "snr" entry counts the head
  // output twice.
  const std::vector<std::pair<std::string, double>>& output_norms() const {
    return output_norms_;
  }

  const BandNormWeights<T>& band_norm() const { return band_norm_; }
  const TfLstmWeights<T>& tf_weights() const { return tf_; }
  const LstmWeights<T>& snr_lstm() const { return snr_lstm_; }

  // Time padding of decoder layer l in offline mode.
  std::pair<std::size_t, std::size_t> decoder_time_pad(std::size_t l) const;

  // Parameter-group name of every trainable tensor ("split", "encoder", ...).
  static std::string group_of(const std::string& name);

 private:
  ComplexWeight<T> add_complex(const std::string& name, Shape shape, std::size_t fan_in,
                               bool bias, double scale = 1.0);
  ComplexNorm<T> add_norm(const std::string& name, std::size_t channels, bool activation);
  LstmWeights<T> add_lstm(const std::string& name, std::size_t input, std::size_t hidden);
  ComplexVar<T> apply_norm(const ComplexNorm<T>& n, const ComplexVar<T>& x, bool training);
  ad::Conv2dSpec encoder_spec(std::size_t pad_t_lo) const;
  ad::Conv2dSpec decoder_spec(std::size_t pad_t_lo, std::size_t pad_t_hi) const;

  ModelConfig cfg_;
  ParameterSet<T> params_;
  std::uint64_t init_counter_ = 0;

  ad::Var<T> a_re_, a_im_, s_re_, s_im_;
  BandNormWeights<T> band_norm_;
  std::vector<ConvLayer<T>> encoder_, pathway_, decoder_;
  TfLstmWeights<T> tf_;
  LstmWeights<T> snr_lstm_;
  ad::Var<T> snr_conv_w_, snr_conv_b_;
  std::vector<std::pair<std::string, double>> output_norms_;
};

// Complex deep filtering of bands y [B, K, T, W] with taps
// m [B, K * taps_t * taps_f, T, W] (channel k * taps + i * taps_f + j):
//   out(k, t, f) = sum_{i,j} m(k, i, j, t, f) * y(k, t - i, f - taps_f / 2 + j)
template <typename T>
ComplexVar<T> apply_deep_filter(const ComplexVar<T>& mask, const ComplexVar<T>& y,
                                std::size_t taps_t, std::size_t taps_f);

// Wraps a [T, bins] spectrogram as a batch of one.
template <typename T>
ComplexVar<T> as_batch(const dsp::ComplexSpectrogram<T>& spec);
template <typename T>
dsp::ComplexSpectrogram<T> from_batch(const ComplexVar<T>& x, std::size_t index = 0);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace dccrn
