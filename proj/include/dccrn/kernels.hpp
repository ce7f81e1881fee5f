// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Numeric kernels behind the autodiff ops. Every kernel exists twice:
//   serial::   plain nested loops, the reference used by tests
//   parallel:: OpenMP over the batch axis, Eigen for the dense products
// Both namespaces share signatures so tests and benchmarks can swap them.
// Parallel kernels only split work over independent outputs, so results do
// not depend on the thread count.

#pragma once

#include <cstddef>
#include <span>

namespace dccrn::kernels {

// Row-major C[m x n] = alpha * op(A) * op(B) + beta * C.
// op(A) is m x k; A is stored k x m when trans_a.
struct GemmDims {
  std::size_t m = 0, n = 0, k = 0;
  bool trans_a = false, trans_b = false;
};

// 2-d cross-correlation over [B, C, T, F] tensors with weights [Co, Ci, Kt, Kf].
//   out[b,co,ot,of] = sum w[co,ci,i,j] * x[b,ci, ot*st + i - pad_t, of*sf + j - pad_f]
// Taps landing outside the input read zero. Only the leading pads are stored;
// trailing pads are implied by out_t/out_f.
struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_ch = 1, out_ch = 1;
  std::size_t in_t = 1, in_f = 1;
  std::size_t out_t = 1, out_f = 1;
  std::size_t k_t = 1, k_f = 1;
  std::size_t stride_t = 1, stride_f = 1;
  std::size_t pad_t = 0, pad_f = 0;

  std::size_t in_size() const { return batch * in_ch * in_t * in_f; }
  std::size_t out_size() const { return batch * out_ch * out_t * out_f; }
  std::size_t weight_size() const { return out_ch * in_ch * k_t * k_f; }
};

// LSTM over x[N, T, I] with gate order (input, forget, cell, output).
//   wx [I, 4H], wh [H, 4H], bias [4H]
// Outputs h and c are [N, T, H] in input time order; gates [N, T, 4H] holds
// post-activation values for the backward pass. When reverse is set the
// recurrence runs from t = T-1 down to 0. Empty h0/c0 mean zero state.
struct LstmDims {
  std::size_t batch = 1, steps = 1, input = 1, hidden = 1;
  bool reverse = false;
};

#define DCCRN_DECLARE_KERNELS(T)                                                     \
  void gemm(const GemmDims& d, T alpha, std::span<const T> a, std::span<const T> b, \
            T beta, std::span<T> c);                                                \
  void conv_forward(const ConvGeometry& g, std::span<const T> x,                    \
                    std::span<const T> w, std::span<T> out);                        \
  void conv_backward_data(const ConvGeometry& g, std::span<const T> gout,           \
                          std::span<const T> w, std::span<T> gx);                   \
  void conv_backward_weight(const ConvGeometry& g, std::span<const T> x,            \
                            std::span<const T> gout, std::span<T> gw);              \
  void lstm_forward(const LstmDims& d, std::span<const T> x, std::span<const T> wx, \
                    std::span<const T> wh, std::span<const T> bias,                 \
                    std::span<const T> h0, std::span<const T> c0, std::span<T> h,   \
                    std::span<T> c, std::span<T> gates);                            \
  void lstm_backward(const LstmDims& d, std::span<const T> x, std::span<const T> wx, \
                     std::span<const T> wh, std::span<const T> h0,                  \
                     std::span<const T> c0, std::span<const T> h,                   \
                     std::span<const T> c, std::span<const T> gates,                \
                     std::span<const T> dh, std::span<T> dx, std::span<T> dwx,      \
                     std::span<T> dwh, std::span<T> dbias);

namespace serial {
DCCRN_DECLARE_KERNELS(float)
DCCRN_DECLARE_KERNELS(double)
}  // namespace serial

namespace parallel {
DCCRN_DECLARE_KERNELS(float)
DCCRN_DECLARE_KERNELS(double)

// Threads used by parallel kernels; 0 restores the OpenMP default.
void set_num_threads(int n);
int num_threads();
}  // namespace parallel

#undef DCCRN_DECLARE_KERNELS

}  // namespace dccrn::kernels
