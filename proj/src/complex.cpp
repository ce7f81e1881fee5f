// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dccrn/complex.hpp"

namespace dccrn {

using ad::Var;

template <typename T>
void check_complex(const ComplexVar<T>& x, const char* what) {
  if (!x.re.defined() || !x.im.defined() || x.re.shape() != x.im.shape())
    throw ShapeError(std::string(what) + ": real and imaginary parts differ in shape");
}

namespace {

// [[a, b], [c, d]] along (row_axis, col_axis).
template <typename T>
Var<T> block(const Var<T>& a, const Var<T>& b, const Var<T>& c, const Var<T>& d,
             std::size_t row_axis, std::size_t col_axis) {
  return ad::concat<T>({ad::concat<T>({a, b}, col_axis), ad::concat<T>({c, d}, col_axis)},
                       row_axis);
}

template <typename T>
ComplexVar<T> split_channels(const Var<T>& y, std::size_t axis, std::size_t n) {
  return {ad::slice(y, axis, 0, n), ad::slice(y, axis, n, n)};
}

template <typename T>
void check_weight(const ComplexWeight<T>& w, const char* what) {
  if (w.re.shape() != w.im.shape())
    throw ShapeError(std::string(what) + ": real and imaginary weights differ in shape");
  if (w.has_bias() && w.bias_re.shape() != w.bias_im.shape())
    throw ShapeError(std::string(what) + ": real and imaginary biases differ in shape");
}

}  // namespace

template <typename T>
ComplexVar<T> complex_conv2d(const ComplexVar<T>& x, const ComplexWeight<T>& w,
                             const ad::Conv2dSpec& spec) {
  check_complex(x, "complex_conv2d");
  check_weight(w, "complex_conv2d");
  // Output rows: re = [Wr, -Wi], im = [Wi, Wr] over stacked input channels.
  auto big = block(w.re, ad::neg(w.im), w.im, w.re, 0, 1);
  auto xs = ad::concat<T>({x.re, x.im}, 1);
  Var<T> bias;
  if (w.has_bias()) bias = ad::concat<T>({w.bias_re, w.bias_im}, 0);
  auto y = ad::conv2d(xs, big, w.has_bias() ? &bias : nullptr, spec);
  return split_channels(y, 1, w.re.dim(0));
}

template <typename T>
ComplexVar<T> complex_deconv2d(const ComplexVar<T>& x, const ComplexWeight<T>& w,
                               const ad::Conv2dSpec& spec) {
  check_complex(x, "complex_deconv2d");
  check_weight(w, "complex_deconv2d");
  // Weight rows index input channels: re input feeds [Wr, Wi], im input [-Wi, Wr].
  auto big = block(w.re, w.im, ad::neg(w.im), w.re, 0, 1);
  auto xs = ad::concat<T>({x.re, x.im}, 1);
  Var<T> bias;
  if (w.has_bias()) bias = ad::concat<T>({w.bias_re, w.bias_im}, 0);
  auto y = ad::conv_transpose2d(xs, big, w.has_bias() ? &bias : nullptr, spec);
  return split_channels(y, 1, w.re.dim(1));
}

template <typename T>
ComplexVar<T> clp(const ComplexVar<T>& x, const ComplexWeight<T>& w) {
  check_complex(x, "clp");
  check_weight(w, "clp");
  const Shape& s = x.shape();
  const std::size_t in = w.re.dim(0), out = w.re.dim(1);
  if (s.empty() || s.back() != in)
    throw ShapeError("clp: input " + shape_str(s) + " does not end in " + std::to_string(in));
  const std::size_t rows = shape_size(s) / in;
  auto xs = ad::concat<T>({ad::reshape(x.re, {rows, in}), ad::reshape(x.im, {rows, in})}, 1);
  auto y = ad::matmul(xs, block(w.re, w.im, ad::neg(w.im), w.re, 0, 1));
  if (w.has_bias()) y = ad::add(y, ad::concat<T>({w.bias_re, w.bias_im}, 0));
  Shape os = s;
  os.back() = out;
  auto parts = split_channels(y, 1, out);
  return {ad::reshape(parts.re, os), ad::reshape(parts.im, os)};
}

template <typename T>
ComplexVar<T> complex_lstm(const ComplexVar<T>& x, const LstmWeights<T>& real,
                           const LstmWeights<T>& imag) {
  check_complex(x, "complex_lstm");
  return {ad::lstm(x.re, real.wx, real.wh, real.bias, false),
          ad::lstm(x.im, imag.wx, imag.wh, imag.bias, false)};
}

template <typename T>
Var<T> blstm(const Var<T>& x, const LstmWeights<T>& fwd, const LstmWeights<T>& bwd) {
  return ad::concat<T>(
      {ad::lstm(x, fwd.wx, fwd.wh, fwd.bias, false), ad::lstm(x, bwd.wx, bwd.wh, bwd.bias, true)},
      2);
}

template <typename T>
ComplexVar<T> complex_blstm(const ComplexVar<T>& x, const ComplexBlstmWeights<T>& w) {
  check_complex(x, "complex_blstm");
  return {blstm(x.re, w.real_fwd, w.real_bwd), blstm(x.im, w.imag_fwd, w.imag_bwd)};
}

template <typename T>
ComplexVar<T> tf_frequency_stage(const ComplexVar<T>& e, const TfLstmWeights<T>& w) {
  check_complex(e, "tf_lstm");
  if (e.shape().size() != 4)
    throw ShapeError("tf_lstm: expected [B, C, T, F], got " + shape_str(e.shape()));
  const std::size_t B = e.dim(0), C = e.dim(1), TT = e.dim(2), F = e.dim(3);
  auto rows = [&](const Var<T>& v) {
    return ad::reshape(ad::permute(v, {0, 2, 3, 1}), {B * TT, F, C});
  };
  auto u = complex_blstm(ComplexVar<T>{rows(e.re), rows(e.im)}, w.f_blstm);
  auto o = clp(u, w.clp_f);
  const std::size_t Cp = o.dim(2);
  auto bins = [&](const Var<T>& v) {
    return ad::reshape(ad::permute(ad::reshape(v, {B, TT, F, Cp}), {0, 2, 1, 3}), {B * F, TT, Cp});
  };
  return {bins(o.re), bins(o.im)};
}

template <typename T>
ComplexVar<T> tf_time_projection(const ComplexVar<T>& h, const TfLstmWeights<T>& w,
                                 std::size_t batch, std::size_t bins) {
  auto o = clp(h, w.clp_t);
  const std::size_t TT = o.dim(1), Cp = o.dim(2);
  auto back = [&](const Var<T>& v) {
    return ad::permute(ad::reshape(v, {batch, bins, TT, Cp}), {0, 3, 2, 1});
  };
  return {back(o.re), back(o.im)};
}

template <typename T>
ComplexVar<T> complex_tf_lstm(const ComplexVar<T>& e, const TfLstmWeights<T>& w) {
  auto of = tf_frequency_stage(e, w);
  auto h = complex_lstm(of, w.t_lstm_re, w.t_lstm_im);
  return tf_time_projection(h, w, e.dim(0), e.dim(3));
}

#define DCCRN_INSTANTIATE(T)                                                                    \
  template void check_complex<T>(const ComplexVar<T>&, const char*);                            \
  template ComplexVar<T> complex_conv2d<T>(const ComplexVar<T>&, const ComplexWeight<T>&,       \
                                           const ad::Conv2dSpec&);                              \
  template ComplexVar<T> complex_deconv2d<T>(const ComplexVar<T>&, const ComplexWeight<T>&,     \
                                             const ad::Conv2dSpec&);                            \
  template ComplexVar<T> clp<T>(const ComplexVar<T>&, const ComplexWeight<T>&);                 \
  template ComplexVar<T> complex_lstm<T>(const ComplexVar<T>&, const LstmWeights<T>&,           \
                                         const LstmWeights<T>&);                                \
  template Var<T> blstm<T>(const Var<T>&, const LstmWeights<T>&, const LstmWeights<T>&);        \
  template ComplexVar<T> complex_blstm<T>(const ComplexVar<T>&, const ComplexBlstmWeights<T>&); \
  template ComplexVar<T> tf_frequency_stage<T>(const ComplexVar<T>&, const TfLstmWeights<T>&);  \
  template ComplexVar<T> tf_time_projection<T>(const ComplexVar<T>&, const TfLstmWeights<T>&,   \
                                               std::size_t, std::size_t);                       \
  template ComplexVar<T> complex_tf_lstm<T>(const ComplexVar<T>&, const TfLstmWeights<T>&);

DCCRN_INSTANTIATE(float)
DCCRN_INSTANTIATE(double)

}  // namespace dccrn
