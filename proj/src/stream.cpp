// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dccrn/stream.hpp"

#include <algorithm>

#include "dccrn/kernels.hpp"

namespace dccrn {

using ad::Var;

namespace {

// Matches the instance_norm default.
constexpr double kNormEps = 1e-5;

template <typename T>
ComplexVar<T> zeros_like(const ComplexVar<T>& x) {
  return {Var<T>(Tensor<T>(x.shape())), Var<T>(Tensor<T>(x.shape()))};
}

template <typename T>
ComplexVar<T> cat(const std::vector<ComplexVar<T>>& parts, std::size_t axis) {
  std::vector<Var<T>> re, im;
  for (const auto& p : parts) {
    re.push_back(p.re);
    im.push_back(p.im);
  }
  return {ad::concat<T>(re, axis), ad::concat<T>(im, axis)};
}

template <typename T>
ComplexVar<T> last_frame(const ComplexVar<T>& x, std::size_t axis) {
  const std::size_t n = x.dim(axis);
  return {ad::slice(x.re, axis, n - 1, 1), ad::slice(x.im, axis, n - 1, 1)};
}

// One LSTM step for every row, carrying h and c.
template <typename T>
Var<T> lstm_step(const Var<T>& x, const LstmWeights<T>& w, std::vector<T>& h, std::vector<T>& c) {
  const std::size_t N = x.dim(0), I = x.dim(2), H = w.hidden();
  if (h.empty()) {
    h.assign(N * H, T{0});
    c.assign(N * H, T{0});
  }
  kernels::LstmDims d{N, 1, I, H, false};
  Tensor<T> h_out({N, 1, H});
  std::vector<T> c_out(N * H), gates(N * 4 * H);
  kernels::parallel::lstm_forward(d, x.value().data(), w.wx.value().data(), w.wh.value().data(),
                                  w.bias.value().data(), std::span<const T>(h),
                                  std::span<const T>(c), h_out.data(), c_out, gates);
  h.assign(h_out.data().begin(), h_out.data().end());
  c = std::move(c_out);
  return Var<T>(std::move(h_out));
}

}  // namespace

// ---- StreamState ---------------------------------------------------------------

template <typename T>
StreamState<T>::StreamState(Model<T>& model, bool postproc)
    : model_(model), cfg_(model.config()), postproc_(postproc) {
  if (cfg_.input_norm != ad::NormSpan::kCausal)
    throw StateError("streaming needs causal input normalization");
  reset();
}

template <typename T>
void StreamState<T>::reset() {
  frames_in_ = frames_out_ = 0;
  norm_re_.assign(cfg_.bands, {});
  norm_im_.assign(cfg_.bands, {});
  enc_prev_.assign(cfg_.depth(), {});
  dec_prev_.assign(cfg_.depth(), {});
  h_re_.clear();
  c_re_.clear();
  h_im_.clear();
  c_im_.clear();
  bands_.clear();
  noisy_.clear();
  track_.clear();
  pp_stats_.clear();
}

template <typename T>
std::optional<SpectralFrame<T>> StreamState<T>::process(std::size_t index, std::span<const T> re,
                                                        std::span<const T> im) {
  if (index != frames_in_)
    throw StateError("stream: expected frame " + std::to_string(frames_in_) + ", got " +
                     std::to_string(index));
  const std::size_t bins = cfg_.frame.bins();
  if (re.size() != bins || im.size() != bins)
    throw ShapeError("stream: frame must have " + std::to_string(bins) + " bins");
  ad::NoGradGuard no_grad;
  const std::size_t K = cfg_.bands, W = cfg_.band_width(), L = cfg_.depth();

  ComplexVar<T> noisy{Var<T>(Tensor<T>({1, 1, bins}, std::vector<T>(re.begin(), re.end()))),
                      Var<T>(Tensor<T>({1, 1, bins}, std::vector<T>(im.begin(), im.end())))};
  auto bands = model_.analysis(noisy);  // [1, K, 1, W]

  // Causal instance norm, one running sum per band and plane.
  const auto& bn = model_.band_norm();
  Tensor<T> nre({1, K, 1, W}), nim({1, K, 1, W});
  const T eps = static_cast<T>(kNormEps);
  for (std::size_t k = 0; k < K; ++k) {
    const T* pr = bands.re.value().ptr() + k * W;
    const T* pi = bands.im.value().ptr() + k * W;
    auto [mr, rr] = norm_re_[k].push(pr, W, eps);
    auto [mi, ri] = norm_im_[k].push(pi, W, eps);
    for (std::size_t f = 0; f < W; ++f) {
      nre[k * W + f] =
          ad::CausalNormStats::apply(pr[f], mr, rr, bn.gamma_re.value()[k], bn.beta_re.value()[k]);
      nim[k * W + f] =
          ad::CausalNormStats::apply(pi[f], mi, ri, bn.gamma_im.value()[k], bn.beta_im.value()[k]);
    }
  }
  ComplexVar<T> x{Var<T>(std::move(nre)), Var<T>(std::move(nim))};

  std::vector<ComplexVar<T>> enc(L);
  for (std::size_t l = 0; l < L; ++l) {
    if (!enc_prev_[l].re.defined()) enc_prev_[l] = zeros_like(x);
    auto y = model_.encode(l, cat<T>({enc_prev_[l], x}, 2), false, 0);
    enc_prev_[l] = x;
    enc[l] = y;
    x = y;
  }

  const auto& tf = model_.tf_weights();
  auto of = tf_frequency_stage(enc.back(), tf);  // [Fb, 1, C']
  ComplexVar<T> h{lstm_step(of.re, tf.t_lstm_re, h_re_, c_re_),
                  lstm_step(of.im, tf.t_lstm_im, h_im_, c_im_)};
  auto d = tf_time_projection(h, tf, 1, enc.back().dim(3));

  for (std::size_t l = L; l-- > 1;) {
    auto in = cat<T>({d, model_.pathway(l, enc[l], false)}, 1);
    if (!dec_prev_[l].re.defined()) dec_prev_[l] = zeros_like(in);
    d = model_.decode(l, cat<T>({dec_prev_[l], in}, 2), false, 1, 1);
    dec_prev_[l] = in;
  }
  auto in0 = cat<T>({d, model_.pathway(0, enc[0], false)}, 1);

  std::optional<SpectralFrame<T>> out;
  if (frames_in_ > 0) out = finish(in0);
  dec_prev_[0] = in0;
  bands_.push_back(bands);
  while (bands_.size() > cfg_.df_taps_t) bands_.pop_front();
  noisy_.emplace_back(std::vector<T>(re.begin(), re.end()), std::vector<T>(im.begin(), im.end()));
  while (noisy_.size() > 2) noisy_.pop_front();
  ++frames_in_;
  return out;
}

template <typename T>
std::optional<SpectralFrame<T>> StreamState<T>::flush() {
  if (frames_out_ == frames_in_) return std::nullopt;
  ad::NoGradGuard no_grad;
  return finish(zeros_like(dec_prev_[0]));
}

// Last decoder layer on [t - 1, t], then deep filter and merge for frame t - 1.
template <typename T>
SpectralFrame<T> StreamState<T>::finish(const ComplexVar<T>& last_in) {
  const std::size_t K = cfg_.bands, W = cfg_.band_width(), taps_t = cfg_.df_taps_t;
  auto mask = model_.decode(0, cat<T>({dec_prev_[0], last_in}, 2), false, 1, 1);

  // Window of taps_t band frames ending at t - 1; only the last mask frame is used.
  std::vector<ComplexVar<T>> ys;
  ComplexVar<T> zero_band{Var<T>(Tensor<T>({1, K, 1, W})), Var<T>(Tensor<T>({1, K, 1, W}))};
  for (std::size_t i = bands_.size(); i < taps_t; ++i) ys.push_back(zero_band);
  ys.insert(ys.end(), bands_.begin(), bands_.end());
  std::vector<ComplexVar<T>> ms(taps_t - 1, zeros_like(mask));
  ms.push_back(mask);
  auto spec = last_frame(model_.synthesis(cat<T>(ms, 2), cat<T>(ys, 2)), 1);

  SpectralFrame<T> f;
  f.index = frames_out_++;
  const auto& r = spec.re.value();
  const auto& i = spec.im.value();
  f.re.assign(r.data().begin(), r.data().end());
  f.im.assign(i.data().begin(), i.data().end());
  if (postproc_) {
    const auto& y = noisy_.back();
    pp_stats_.push_back(postproc::process_frame(track_, f.re.data(), f.im.data(), y.first.data(),
                                                y.second.data(), f.re.size()));
  }
  return f;
}

// ---- StreamingEnhancer -------------------------------------------------------------

template <typename T>
StreamingEnhancer<T>::StreamingEnhancer(Model<T>& model, bool postproc)
    : state_(model, postproc), frame_(model.config().frame) {}

template <typename T>
void StreamingEnhancer<T>::reset() {
  state_.reset();
  in_buf_.clear();
  ola_.clear();
  samples_in_ = out_pos_ = next_frame_ = latency_samples_ = 0;
}

template <typename T>
double StreamingEnhancer<T>::measured_latency_ms() const {
  return 1000.0 * static_cast<double>(latency_samples_) / frame_.sample_rate;
}

template <typename T>
void StreamingEnhancer<T>::synthesize(const SpectralFrame<T>& f, std::vector<T>& out) {
  dsp::ComplexSpectrogram<T> one(1, f.re.size());
  std::copy(f.re.begin(), f.re.end(), one.re.ptr());
  std::copy(f.im.begin(), f.im.end(), one.im.ptr());
  const auto wave = dsp::istft(one, frame_);
  const std::size_t start = f.index * frame_.hop - out_pos_;
  if (ola_.size() < start + wave.size()) ola_.resize(start + wave.size(), T{0});
  for (std::size_t n = 0; n < wave.size(); ++n) ola_[start + n] += wave[n];
  // Later frames start at or after (index + 1) * hop.
  const std::size_t ready = start + frame_.hop;
  if (out_pos_ == 0 && latency_samples_ == 0) {
    const std::size_t consumed = (next_frame_ - 1) * frame_.hop + frame_.frame_len;
    latency_samples_ = consumed + frame_.hop;
  }
  out.insert(out.end(), ola_.begin(), ola_.begin() + ready);
  ola_.erase(ola_.begin(), ola_.begin() + ready);
  out_pos_ += ready;
}

template <typename T>
std::vector<T> StreamingEnhancer<T>::push(std::span<const T> samples) {
  std::vector<T> out;
  in_buf_.insert(in_buf_.end(), samples.begin(), samples.end());
  samples_in_ += samples.size();
  while (in_buf_.size() >= frame_.frame_len) {
    auto spec = dsp::stft<T>(std::span<const T>(in_buf_.data(), frame_.frame_len), frame_);
    auto f = state_.process(next_frame_++, spec.re.data(), spec.im.data());
    in_buf_.erase(in_buf_.begin(), in_buf_.begin() + frame_.hop);
    if (f) synthesize(*f, out);
  }
  return out;
}

template <typename T>
std::vector<T> StreamingEnhancer<T>::finish() {
  std::vector<T> out;
  if (auto f = state_.flush()) synthesize(*f, out);
  out.insert(out.end(), ola_.begin(), ola_.end());
  out_pos_ += ola_.size();
  ola_.clear();
  return out;
}

template <typename T>
dsp::ComplexSpectrogram<T> stream_spectrogram(Model<T>& model,
                                              const dsp::ComplexSpectrogram<T>& noisy,
                                              bool postproc) {
  StreamState<T> state(model, postproc);
  const std::size_t F = noisy.bins();
  dsp::ComplexSpectrogram<T> out(noisy.frames(), F);
  auto store = [&](const SpectralFrame<T>& f) {
    std::copy(f.re.begin(), f.re.end(), out.re.ptr() + f.index * F);
    std::copy(f.im.begin(), f.im.end(), out.im.ptr() + f.index * F);
  };
  for (std::size_t t = 0; t < noisy.frames(); ++t) {
    auto f = state.process(t, std::span<const T>(noisy.re.ptr() + t * F, F),
                           std::span<const T>(noisy.im.ptr() + t * F, F));
    if (f) store(*f);
  }
  if (auto f = state.flush()) store(*f);
  return out;
}

template class StreamState<float>;
template class StreamState<double>;
template class StreamingEnhancer<float>;
template class StreamingEnhancer<double>;
template dsp::ComplexSpectrogram<float> stream_spectrogram<float>(
    Model<float>&, const dsp::ComplexSpectrogram<float>&, bool);
template dsp::ComplexSpectrogram<double> stream_spectrogram<double>(
    Model<double>&, const dsp::ComplexSpectrogram<double>&, bool);

}  // namespace dccrn
