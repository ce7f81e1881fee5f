// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Frame-by-frame inference. StreamState keeps, per layer, the one previous
// frame each time-kernel-2 convolution reads, the causal normalization sums,
// the T-LSTM state and the past band frames the deep filter reads. The last
// decoder layer reads one future frame, so frame t is emitted once frame t + 1
// has arrived; flush() treats the missing future frame as zero, as the offline
// padding does.
//
// StreamingEnhancer adds sample-domain framing and overlap-add. A hop of
// output samples is final once the frame that starts there is synthesized.

#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "dccrn/model.hpp"
#include "dccrn/postproc.hpp"

namespace dccrn {

template <typename T>
struct SpectralFrame {
  std::size_t index = 0;
  std::vector<T> re, im;  // bins each
};

template <typename T>
class StreamState {
 public:
  // The model is read only; several states may share it.
  explicit StreamState(Model<T>& model, bool postproc = false);

  // Feeds STFT frame `index` (must equal frames_in()). Returns the enhanced
  // frame index - 1 when there is one.
  std::optional<SpectralFrame<T>> process(std::size_t index, std::span<const T> re,
                                          std::span<const T> im);
  // Emits the final pending frame, if any.
  std::optional<SpectralFrame<T>> flush();
  void reset();

  std::size_t frames_in() const { return frames_in_; }
  std::size_t frames_out() const { return frames_out_; }
  static constexpr std::size_t kLookaheadFrames = 1;
  const std::vector<postproc::FrameStats>& postproc_stats() const { return pp_stats_; }

 private:
  using CV = ComplexVar<T>;
  SpectralFrame<T> finish(const CV& last_in);

  Model<T>& model_;
  const ModelConfig cfg_;
  bool postproc_;

  std::size_t frames_in_ = 0, frames_out_ = 0;
  std::vector<ad::CausalNormStats> norm_re_, norm_im_;  // per band
  std::vector<CV> enc_prev_;                            // input of encoder layer l at t - 1
  std::vector<CV> dec_prev_;                            // input of decoder layer l at t - 1
  std::vector<T> h_re_, c_re_, h_im_, c_im_;            // T-LSTM state [bins, H]
  std::deque<CV> bands_;                                // un-normalized band frames, newest last
  std::deque<std::pair<std::vector<T>, std::vector<T>>> noisy_;  // for the post-filter
  postproc::SnrTrack track_;
  std::vector<postproc::FrameStats> pp_stats_;
};

template <typename T>
class StreamingEnhancer {
 public:
  explicit StreamingEnhancer(Model<T>& model, bool postproc = false);

  // Appends input samples; returns output samples that became final.
  std::vector<T> push(std::span<const T> samples);
  // Flushes the look-ahead frame and the overlap tail.
  std::vector<T> finish();
  void reset();

  // Input samples that had been consumed when the first output sample was
  // released, plus one hop of processing time for that frame.
  std::size_t measured_latency_samples() const { return latency_samples_; }
  double measured_latency_ms() const;
  std::size_t samples_in() const { return samples_in_; }

 private:
  void synthesize(const SpectralFrame<T>& f, std::vector<T>& out);

  StreamState<T> state_;
  dsp::FrameConfig frame_;
  std::vector<T> in_buf_;  // samples of frames not yet analysed
  std::vector<T> ola_;     // overlap-add accumulator starting at out_pos_
  std::size_t samples_in_ = 0, out_pos_ = 0, next_frame_ = 0;
  std::size_t latency_samples_ = 0;
};

// Runs a whole spectrogram through a fresh StreamState; one frame per row.
template <typename T>
dsp::ComplexSpectrogram<T> stream_spectrogram(Model<T>& model,
                                              const dsp::ComplexSpectrogram<T>& noisy,
                                              bool postproc = false);

}  // namespace dccrn
