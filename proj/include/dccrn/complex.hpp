// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Complex-valued layers built from pairs of real tensors. Every op follows the
// complex product rule (a + jb)(c + jd) = (ac - bd) + j(ad + bc). Convolutions
// and projections are evaluated as one real op on stacked [re; im] operands
// with the block weight [[Wr, -Wi], [Wi, Wr]].

#pragma once

#include "dccrn/autodiff.hpp"

namespace dccrn {

template <typename T>
struct ComplexVar {
  ad::Var<T> re;
  ad::Var<T> im;

  const Shape& shape() const { return re.shape(); }
  std::size_t dim(std::size_t i) const { return re.dim(i); }
};

// Pair of real weights (and optional biases) acting as one complex weight.
template <typename T>
struct ComplexWeight {
  ad::Var<T> re;
  ad::Var<T> im;
  ad::Var<T> bias_re;  // undefined when the layer has no bias
  ad::Var<T> bias_im;

  bool has_bias() const { return bias_re.defined(); }
};

template <typename T>
void check_complex(const ComplexVar<T>& x, const char* what);

// x [B, Ci, T, F], w [Co, Ci, Kt, Kf] -> [B, Co, T', F'].
template <typename T>
ComplexVar<T> complex_conv2d(const ComplexVar<T>& x, const ComplexWeight<T>& w,
                             const ad::Conv2dSpec& spec);

// x [B, Ci, T, F], w [Ci, Co, Kt, Kf]; same extents as ad::conv_transpose2d.
template <typename T>
ComplexVar<T> complex_deconv2d(const ComplexVar<T>& x, const ComplexWeight<T>& w,
                               const ad::Conv2dSpec& spec);

// Complex linear projection of the last axis: x [..., I], w [I, O] -> [..., O].
// No modulus is taken; the output stays complex.
template <typename T>
ComplexVar<T> clp(const ComplexVar<T>& x, const ComplexWeight<T>& w);

// Real LSTM weights: wx [I, 4H], wh [H, 4H], bias [4H].
template <typename T>
struct LstmWeights {
  ad::Var<T> wx;
  ad::Var<T> wh;
  ad::Var<T> bias;

  std::size_t hidden() const { return wh.dim(0); }
};

// Real and imaginary parts run through independent LSTMs.
// x [N, S, I] -> [N, S, H].
template <typename T>
ComplexVar<T> complex_lstm(const ComplexVar<T>& x, const LstmWeights<T>& real,
                           const LstmWeights<T>& imag);

// Bidirectional LSTM: forward and backward hidden states concatenated,
// x [N, S, I] -> [N, S, 2H].
template <typename T>
ad::Var<T> blstm(const ad::Var<T>& x, const LstmWeights<T>& fwd, const LstmWeights<T>& bwd);

template <typename T>
struct ComplexBlstmWeights {
  LstmWeights<T> real_fwd, real_bwd, imag_fwd, imag_bwd;
};

template <typename T>
ComplexVar<T> complex_blstm(const ComplexVar<T>& x, const ComplexBlstmWeights<T>& w);

template <typename T>
struct TfLstmWeights {
  ComplexBlstmWeights<T> f_blstm;
  ComplexWeight<T> clp_f;  // [2H_f, C]
  LstmWeights<T> t_lstm_re, t_lstm_im;
  ComplexWeight<T> clp_t;  // [H_t, C]
};

// Complex TF-LSTM over the encoder output E [B, C, T, F]:
//   U_f = CAT(BLSTM_r(Re E), BLSTM_i(Im E)) scanned over F for every frame
//   O_f = CLP(U_f)
//   O_t = CLP(CAT(LSTM_r(Re O_f), LSTM_i(Im O_f))) scanned over T for every bin
// Returns O_t laid out as [B, C', T, F].
template <typename T>
ComplexVar<T> complex_tf_lstm(const ComplexVar<T>& e, const TfLstmWeights<T>& w);

// Pieces of complex_tf_lstm, exposed for streaming. frequency_stage maps
// [B, C, T, F] to O_f as [B*F, T, C'] rows (bin-major); time_projection maps
// T-LSTM output [B*F, T, H] back to [B, C', T, F].
template <typename T>
ComplexVar<T> tf_frequency_stage(const ComplexVar<T>& e, const TfLstmWeights<T>& w);
template <typename T>
ComplexVar<T> tf_time_projection(const ComplexVar<T>& h, const TfLstmWeights<T>& w,
                                 std::size_t batch, std::size_t bins);

}  // namespace dccrn
