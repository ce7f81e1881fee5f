// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dccrn/model.hpp"

#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

namespace dccrn {

using ad::Var;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::size_t parse_size(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DataError("model config: missing key " + key);
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(key);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw DataError("model config: bad value for " + key + ": " + it->second);
  }
}

// Rethrows shape errors with the failing layer in front.
template <typename F>
auto in_layer(const std::string& layer, F&& fn) {
  try {
    return fn();
  } catch (const ShapeError& e) {
    throw ShapeError(layer + ": " + e.what());
  }
}

}  // namespace

// ---- config -------------------------------------------------------------------

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.channels = {8, 16, 32, 64};
  c.rnn_units = 32;
  c.snr_units = 16;
  return c;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.frame = dsp::FrameConfig{8, 4, 16, 16000};
  c.bands = 2;
  c.channels = {8, 16};
  c.rnn_units = 4;
  c.snr_units = 3;
  return c;
}

std::size_t ModelConfig::bins_after(std::size_t layer) const {
  std::size_t f = band_width();
  const std::size_t pad = kernel_f / 2;
  for (std::size_t l = 0; l < layer; ++l) f = (f + 2 * pad - kernel_f) / stride_f + 1;
  return f;
}

void ModelConfig::validate() const {
  frame.validate();
  subband().validate();
  auto fail = [](const std::string& what) { throw ShapeError("model config: " + what); };
  if (channels.empty()) fail("at least one encoder layer is required");
  for (std::size_t c : channels)
    if (c == 0 || c % 2 != 0) fail("channel counts must be positive and even");
  if (kernel_t != 2) fail("time kernel must be 2 (current and one previous frame)");
  if (kernel_f % 2 == 0 || stride_f != 2) fail("frequency kernel must be odd with stride 2");
  if (band_width() % (std::size_t{1} << depth()) != 0)
    fail("band width " + std::to_string(band_width()) + " is not divisible by 2^" +
         std::to_string(depth()));
  if (rnn_units == 0 || snr_units == 0 || snr_kernel == 0) fail("recurrent sizes must be > 0");
  if (df_taps_t == 0 || df_taps_f % 2 == 0) fail("deep-filter taps need taps_t > 0, odd taps_f");
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  std::ostringstream ch;
  for (std::size_t i = 0; i < channels.size(); ++i) ch << (i ? "," : "") << channels[i];
  return {{"frame_len", std::to_string(frame.frame_len)},
          {"hop", std::to_string(frame.hop)},
          {"fft_size", std::to_string(frame.fft_size)},
          {"sample_rate", std::to_string(frame.sample_rate)},
          {"bands", std::to_string(bands)},
          {"channels", ch.str()},
          {"kernel_t", std::to_string(kernel_t)},
          {"kernel_f", std::to_string(kernel_f)},
          {"stride_f", std::to_string(stride_f)},
          {"rnn_units", std::to_string(rnn_units)},
          {"snr_units", std::to_string(snr_units)},
          {"snr_kernel", std::to_string(snr_kernel)},
          {"df_taps_t", std::to_string(df_taps_t)},
          {"df_taps_f", std::to_string(df_taps_f)},
          {"input_norm", input_norm == ad::NormSpan::kCausal ? "causal" : "utterance"},
          {"seed", std::to_string(seed)}};
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  c.frame.frame_len = parse_size(kv, "frame_len");
  c.frame.hop = parse_size(kv, "hop");
  c.frame.fft_size = parse_size(kv, "fft_size");
  c.frame.sample_rate = static_cast<int>(parse_size(kv, "sample_rate"));
  c.bands = parse_size(kv, "bands");
  c.kernel_t = parse_size(kv, "kernel_t");
  c.kernel_f = parse_size(kv, "kernel_f");
  c.stride_f = parse_size(kv, "stride_f");
  c.rnn_units = parse_size(kv, "rnn_units");
  c.snr_units = parse_size(kv, "snr_units");
  c.snr_kernel = parse_size(kv, "snr_kernel");
  c.df_taps_t = parse_size(kv, "df_taps_t");
  c.df_taps_f = parse_size(kv, "df_taps_f");
  c.seed = parse_size(kv, "seed");
  auto norm = kv.find("input_norm");
  if (norm == kv.end() || (norm->second != "causal" && norm->second != "utterance"))
    throw DataError("model config: input_norm must be causal or utterance");
  c.input_norm = norm->second == "causal" ? ad::NormSpan::kCausal : ad::NormSpan::kUtterance;
  auto ch = kv.find("channels");
  if (ch == kv.end()) throw DataError("model config: missing key channels");
  c.channels.clear();
  std::stringstream ss(ch->second);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::map<std::string, std::string> one{{"c", item}};
    c.channels.push_back(parse_size(one, "c"));
  }
  c.validate();
  return c;
}

// ---- construction ---------------------------------------------------------------

template <typename T>
ComplexWeight<T> Model<T>::add_complex(const std::string& name, Shape shape, std::size_t fan_in,
                                       bool bias, double scale) {
  const double bound = scale / std::sqrt(static_cast<double>(fan_in));
  auto draw = [&](const Shape& s) {
    std::mt19937_64 rng(cfg_.seed * 0x9E3779B97F4A7C15ULL + ++init_counter_);
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor<T> t(s);
    for (auto& v : t.data()) v = static_cast<T>(u(rng));
    return t;
  };
  ComplexWeight<T> w;
  w.re = params_.add(name + ".w_re", draw(shape));
  w.im = params_.add(name + ".w_im", draw(shape));
  if (bias) {
    // Output channels are axis 0 for conv/linear-as-[O, ...], axis 1 for deconv.
    const std::size_t out =
        shape.size() == 2 || name.rfind("decoder", 0) == 0 ? shape[1] : shape[0];
    w.bias_re = params_.add(name + ".b_re", Tensor<T>({out}));
    w.bias_im = params_.add(name + ".b_im", Tensor<T>({out}));
  }
  return w;
}

template <typename T>
ComplexNorm<T> Model<T>::add_norm(const std::string& name, std::size_t channels, bool activation) {
  ComplexNorm<T> n;
  n.gamma_re = params_.add(name + ".bn.gamma_re", Tensor<T>({channels}, T{1}));
  n.beta_re = params_.add(name + ".bn.beta_re", Tensor<T>({channels}));
  n.gamma_im = params_.add(name + ".bn.gamma_im", Tensor<T>({channels}, T{1}));
  n.beta_im = params_.add(name + ".bn.beta_im", Tensor<T>({channels}));
  n.buf_re = &params_.add_batch_norm_buffers(name + ".bn_re", channels);
  n.buf_im = &params_.add_batch_norm_buffers(name + ".bn_im", channels);
  if (activation) {
    n.slope_re = params_.add(name + ".prelu_re", Tensor<T>({1}, T(0.25)));
    n.slope_im = params_.add(name + ".prelu_im", Tensor<T>({1}, T(0.25)));
  }
  return n;
}

template <typename T>
LstmWeights<T> Model<T>::add_lstm(const std::string& name, std::size_t input, std::size_t hidden) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  auto draw = [&](const Shape& s) {
    std::mt19937_64 rng(cfg_.seed * 0x9E3779B97F4A7C15ULL + ++init_counter_);
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor<T> t(s);
    for (auto& v : t.data()) v = static_cast<T>(u(rng));
    return t;
  };
  LstmWeights<T> w;
  w.wx = params_.add(name + ".wx", draw({input, 4 * hidden}));
  w.wh = params_.add(name + ".wh", draw({hidden, 4 * hidden}));
  w.bias = params_.add(name + ".bias", draw({4 * hidden}));
  return w;
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t K = cfg_.bands, W = cfg_.band_width(), N = cfg_.net_bins();
  const std::size_t L = cfg_.depth(), kt = cfg_.kernel_t, kf = cfg_.kernel_f;

  Tensor<T> are({K, W, W}), aim({K, W, W});
  identity_init(are, aim, cfg_.seed * 31 + 1);
  a_re_ = params_.add("split.a_re", std::move(are));
  a_im_ = params_.add("split.a_im", std::move(aim));
  band_norm_.gamma_re = params_.add("split.norm.gamma_re", Tensor<T>({K}, T{1}));
  band_norm_.beta_re = params_.add("split.norm.beta_re", Tensor<T>({K}));
  band_norm_.gamma_im = params_.add("split.norm.gamma_im", Tensor<T>({K}, T{1}));
  band_norm_.beta_im = params_.add("split.norm.beta_im", Tensor<T>({K}));

  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t in = l == 0 ? K : cfg_.part(l - 1), out = cfg_.part(l);
    const std::string name = "encoder." + std::to_string(l);
    ConvLayer<T> layer;
    layer.w = add_complex(name, {out, in, kt, kf}, in * kt * kf, true);
    layer.norm = add_norm(name, out, true);
    encoder_.push_back(layer);
  }
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t c = cfg_.part(l);
    const std::string name = "pathway." + std::to_string(l);
    ConvLayer<T> layer;
    layer.w = add_complex(name, {c, c, 1, 1}, c, true);
    layer.norm = add_norm(name, c, false);
    pathway_.push_back(layer);
  }

  const std::size_t C = cfg_.part(L - 1), H = cfg_.rnn_units;
  tf_.f_blstm.real_fwd = add_lstm("tf.f_blstm.re.fwd", C, H);
  tf_.f_blstm.real_bwd = add_lstm("tf.f_blstm.re.bwd", C, H);
  tf_.f_blstm.imag_fwd = add_lstm("tf.f_blstm.im.fwd", C, H);
  tf_.f_blstm.imag_bwd = add_lstm("tf.f_blstm.im.bwd", C, H);
  tf_.clp_f = add_complex("tf.clp_f", {2 * H, C}, 2 * H, true);
  tf_.t_lstm_re = add_lstm("tf.t_lstm.re", C, H);
  tf_.t_lstm_im = add_lstm("tf.t_lstm.im", C, H);
  tf_.clp_t = add_complex("tf.clp_t", {H, C}, H, true);

  decoder_.resize(L);
  for (std::size_t l = L; l-- > 0;) {
    const std::size_t in = 2 * cfg_.part(l);
    const bool last = l == 0;
    const std::size_t out = last ? K * cfg_.taps() : cfg_.part(l - 1);
    const std::string name = "decoder." + std::to_string(l);
    ConvLayer<T> layer;
    // Small final weights plus a unit centre tap start the filter near identity.
    layer.w = add_complex(name, {in, out, kt, kf}, in * kt * kf, true, last ? 0.1 : 1.0);
    if (last) {
      layer.has_norm = false;
      auto& b = layer.w.bias_re.mutable_value();
      for (std::size_t k = 0; k < K; ++k) b[k * cfg_.taps() + cfg_.df_taps_f / 2] = T{1};
    } else {
      layer.norm = add_norm(name, out, true);
    }
    decoder_[l] = layer;
  }

  Tensor<T> sre({1, N, N}), sim({1, N, N});
  identity_init(sre, sim, cfg_.seed * 31 + 2);
  s_re_ = params_.add("merge.s_re", std::move(sre).reshaped({N, N}));
  s_im_ = params_.add("merge.s_im", std::move(sim).reshaped({N, N}));

  const std::size_t snr_in = 2 * C * cfg_.bins_after(L);
  snr_lstm_ = add_lstm("snr.lstm", snr_in, cfg_.snr_units);
  {
    std::mt19937_64 rng(cfg_.seed * 0x9E3779B97F4A7C15ULL + ++init_counter_);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg_.snr_units * cfg_.snr_kernel));
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor<T> w({1, cfg_.snr_units, cfg_.snr_kernel, 1});
    for (auto& v : w.data()) v = static_cast<T>(u(rng));
    snr_conv_w_ = params_.add("snr.conv.w", std::move(w));
    snr_conv_b_ = params_.add("snr.conv.b", Tensor<T>({1}));
  }
}

// ---- blocks -------------------------------------------------------------------------

template <typename T>
ad::Conv2dSpec Model<T>::encoder_spec(std::size_t pad_t_lo) const {
  ad::Conv2dSpec s;
  s.stride_f = cfg_.stride_f;
  s.pad_t_lo = pad_t_lo;
  s.pad_f_lo = s.pad_f_hi = cfg_.kernel_f / 2;
  return s;
}

template <typename T>
ad::Conv2dSpec Model<T>::decoder_spec(std::size_t pad_t_lo, std::size_t pad_t_hi) const {
  ad::Conv2dSpec s;
  s.stride_f = cfg_.stride_f;
  s.pad_t_lo = pad_t_lo;
  s.pad_t_hi = pad_t_hi;
  s.pad_f_lo = s.pad_f_hi = cfg_.kernel_f / 2;
  s.out_pad_f = cfg_.stride_f - 1;
  return s;
}

template <typename T>
std::pair<std::size_t, std::size_t> Model<T>::decoder_time_pad(std::size_t l) const {
  // Transposed conv with leading pad p reads input frames t + p - i, i < kt.
  return l == 0 ? std::pair<std::size_t, std::size_t>{1, cfg_.kernel_t - 2}
                : std::pair<std::size_t, std::size_t>{0, cfg_.kernel_t - 1};
}

template <typename T>
std::string Model<T>::group_of(const std::string& name) {
  return name.substr(0, name.find('.'));
}

template <typename T>
ComplexVar<T> Model<T>::apply_norm(const ComplexNorm<T>& n, const ComplexVar<T>& x, bool training) {
  ComplexVar<T> y{ad::batch_norm(x.re, n.gamma_re, n.beta_re, *n.buf_re, training),
                  ad::batch_norm(x.im, n.gamma_im, n.beta_im, *n.buf_im, training)};
  if (n.slope_re.defined()) {
    y.re = ad::prelu(y.re, n.slope_re);
    y.im = ad::prelu(y.im, n.slope_im);
  }
  return y;
}

template <typename T>
ComplexVar<T> Model<T>::analysis(const ComplexVar<T>& noisy) {
  return in_layer("split", [&] {
    check_complex(noisy, "input");
    if (noisy.shape().size() != 3 || noisy.dim(2) != cfg_.frame.bins())
      throw ShapeError("expected [B, T, " + std::to_string(cfg_.frame.bins()) + "], got " +
                       shape_str(noisy.shape()));
    const std::size_t N = cfg_.net_bins();
    ComplexVar<T> net{ad::slice(noisy.re, 2, 1, N), ad::slice(noisy.im, 2, 1, N)};
    return split_bands(net, a_re_, a_im_, cfg_.subband());
  });
}

template <typename T>
ComplexVar<T> Model<T>::normalize(const ComplexVar<T>& bands) {
  return in_layer("split.norm",
                  [&] { return normalize_bands(bands, band_norm_, cfg_.input_norm); });
}

template <typename T>
ComplexVar<T> Model<T>::encode(std::size_t l, const ComplexVar<T>& x, bool training,
                               std::size_t pad_t_lo) {
  return in_layer("encoder." + std::to_string(l), [&] {
    const auto& layer = encoder_.at(l);
    return apply_norm(layer.norm, complex_conv2d(x, layer.w, encoder_spec(pad_t_lo)), training);
  });
}

template <typename T>
ComplexVar<T> Model<T>::pathway(std::size_t l, const ComplexVar<T>& e, bool training) {
  return in_layer("pathway." + std::to_string(l), [&] {
    const auto& layer = pathway_.at(l);
    return apply_norm(layer.norm, complex_conv2d(e, layer.w, ad::Conv2dSpec{}), training);
  });
}

template <typename T>
ComplexVar<T> Model<T>::decode(std::size_t l, const ComplexVar<T>& x, bool training,
                               std::size_t pad_t_lo, std::size_t pad_t_hi) {
  return in_layer("decoder." + std::to_string(l), [&] {
    const auto& layer = decoder_.at(l);
    auto y = complex_deconv2d(x, layer.w, decoder_spec(pad_t_lo, pad_t_hi));
    return layer.has_norm ? apply_norm(layer.norm, y, training) : y;
  });
}

template <typename T>
Var<T> Model<T>::snr_head(const ComplexVar<T>& o) {
  return in_layer("snr", [&] {
    const std::size_t B = o.dim(0), C = o.dim(1), TT = o.dim(2), F = o.dim(3);
    auto flat = [&](const Var<T>& v) {
      return ad::reshape(ad::permute(v, {0, 2, 1, 3}), {B, TT, C * F});
    };
    auto x = ad::concat<T>({flat(o.re), flat(o.im)}, 2);
    auto h = ad::lstm(x, snr_lstm_.wx, snr_lstm_.wh, snr_lstm_.bias, false);
    auto hc = ad::reshape(ad::permute(h, {0, 2, 1}), {B, cfg_.snr_units, TT, 1});
    ad::Conv2dSpec spec;
    spec.pad_t_lo = cfg_.snr_kernel - 1;
    auto y = ad::conv2d(hc, snr_conv_w_, &snr_conv_b_, spec);
    return ad::sigmoid(ad::reshape(y, {B, TT}));
  });
}

template <typename T>
ComplexVar<T> Model<T>::synthesis(const ComplexVar<T>& mask, const ComplexVar<T>& bands) {
  return in_layer("merge", [&] {
    auto filtered = apply_deep_filter(mask, bands, cfg_.df_taps_t, cfg_.df_taps_f);
    auto merged = merge_bands(filtered, s_re_, s_im_, cfg_.subband());
    Var<T> dc(Tensor<T>({merged.dim(0), merged.dim(1), 1}));
    return ComplexVar<T>{ad::concat<T>({dc, merged.re}, 2), ad::concat<T>({dc, merged.im}, 2)};
  });
}

template <typename T>
ModelOutput<T> Model<T>::forward(const ComplexVar<T>& noisy, bool training, StageTimes* times) {
  StageTimes local;
  StageTimes& st = times ? *times : local;
  output_norms_.clear();
  auto record = [this, training](std::string name, const ComplexVar<T>& v) {
    if (!training) return;
    double s = 0;
    for (T a : v.re.value().data()) s += static_cast<double>(a) * a;
    for (T a : v.im.value().data()) s += static_cast<double>(a) * a;
    output_norms_.emplace_back(std::move(name), std::sqrt(s));
  };
  auto t0 = std::chrono::steady_clock::now();
  auto bands = analysis(noisy);
  auto x = normalize(bands);
  st.subband += seconds_since(t0);
  record("subband", x);

  t0 = std::chrono::steady_clock::now();
  std::vector<ComplexVar<T>> enc;
  for (std::size_t l = 0; l < cfg_.depth(); ++l) {
    x = encode(l, x, training, cfg_.kernel_t - 1);
    enc.push_back(x);
  }
  st.encoder += seconds_since(t0);
  for (std::size_t l = 0; l < enc.size(); ++l) record("encoder." + std::to_string(l), enc[l]);

  t0 = std::chrono::steady_clock::now();
  auto o = in_layer("tf_lstm", [&] { return complex_tf_lstm(enc.back(), tf_); });
  st.tf_lstm += seconds_since(t0);

  ModelOutput<T> out;
  out.bottleneck = o;
  t0 = std::chrono::steady_clock::now();
  out.snr = snr_head(o);
  st.snr_head += seconds_since(t0);
  record("tf_lstm", o);
  record("snr", {out.snr, out.snr});

  t0 = std::chrono::steady_clock::now();
  auto d = o;
  for (std::size_t l = cfg_.depth(); l-- > 0;) {
    auto skip = pathway(l, enc[l], training);
    ComplexVar<T> in{ad::concat<T>({d.re, skip.re}, 1), ad::concat<T>({d.im, skip.im}, 1)};
    auto [lo, hi] = decoder_time_pad(l);
    d = decode(l, in, training, lo, hi);
    record("decoder." + std::to_string(l), d);
  }
  st.decoder += seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  out.enhanced = synthesis(d, bands);
  st.subband += seconds_since(t0);
  record("enhanced", out.enhanced);
  return out;
}

// ---- free functions ---------------------------------------------------------------

template <typename T>
ComplexVar<T> apply_deep_filter(const ComplexVar<T>& mask, const ComplexVar<T>& y,
                                std::size_t taps_t, std::size_t taps_f) {
  check_complex(mask, "deep filter taps");
  check_complex(y, "deep filter input");
  auto f = [&](const Var<T>& m, const Var<T>& v) { return ad::tap_filter(m, v, taps_t, taps_f); };
  return {ad::sub(f(mask.re, y.re), f(mask.im, y.im)), ad::add(f(mask.re, y.im), f(mask.im, y.re))};
}

template <typename T>
ComplexVar<T> as_batch(const dsp::ComplexSpectrogram<T>& spec) {
  const Shape s{1, spec.frames(), spec.bins()};
  return {Var<T>(spec.re.reshaped(s)), Var<T>(spec.im.reshaped(s))};
}

template <typename T>
dsp::ComplexSpectrogram<T> from_batch(const ComplexVar<T>& x, std::size_t index) {
  const std::size_t TT = x.dim(1), F = x.dim(2);
  dsp::ComplexSpectrogram<T> s(TT, F);
  std::copy_n(x.re.value().ptr() + index * TT * F, TT * F, s.re.ptr());
  std::copy_n(x.im.value().ptr() + index * TT * F, TT * F, s.im.ptr());
  return s;
}

template class Model<float>;
template class Model<double>;

#define DCCRN_INSTANTIATE(T)                                                              \
  template ComplexVar<T> apply_deep_filter<T>(const ComplexVar<T>&, const ComplexVar<T>&, \
                                              std::size_t, std::size_t);                  \
  template ComplexVar<T> as_batch<T>(const dsp::ComplexSpectrogram<T>&);                  \
  template dsp::ComplexSpectrogram<T> from_batch<T>(const ComplexVar<T>&, std::size_t);

DCCRN_INSTANTIATE(float)
DCCRN_INSTANTIATE(double)

}  // namespace dccrn
