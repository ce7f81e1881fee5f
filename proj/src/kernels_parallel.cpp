// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Eigen must not spawn its own threads; work is split here over independent
// outputs only.
#define EIGEN_DONT_PARALLELIZE

#include <omp.h>

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

#include "dccrn/kernels.hpp"

namespace dccrn::kernels::parallel {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

template <typename T>
void gemm_impl(const GemmDims& d, T alpha, const T* a, const T* b, T beta, T* c) {
  if (d.m == 0 || d.n == 0) return;
  MutMap<T> C(c, d.m, d.n);
  if (d.k == 0) {
    if (beta == T{0}) C.setZero();
    else C *= beta;
    return;
  }
  ConstMap<T> A(a, d.trans_a ? d.k : d.m, d.trans_a ? d.m : d.k);
  ConstMap<T> B(b, d.trans_b ? d.n : d.k, d.trans_b ? d.k : d.n);
  if (beta == T{0}) {
    C.setZero();
  } else if (beta != T{1}) {
    C *= beta;
  }
  if (!d.trans_a && !d.trans_b) C.noalias() += alpha * A * B;
  else if (d.trans_a && !d.trans_b) C.noalias() += alpha * A.transpose() * B;
  else if (!d.trans_a && d.trans_b) C.noalias() += alpha * A * B.transpose();
  else C.noalias() += alpha * A.transpose() * B.transpose();
}

// col[K x P] with K = in_ch*k_t*k_f and P = out_t*out_f, for one batch item.
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const std::size_t P = g.out_t * g.out_f;
  for (std::size_t ci = 0; ci < g.in_ch; ++ci) {
    const T* xc = x + ci * g.in_t * g.in_f;
    for (std::size_t i = 0; i < g.k_t; ++i) {
      for (std::size_t j = 0; j < g.k_f; ++j) {
        T* row = col + ((ci * g.k_t + i) * g.k_f + j) * P;
        for (std::size_t ot = 0; ot < g.out_t; ++ot) {
          T* dst = row + ot * g.out_f;
          const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(ot * g.stride_t + i) -
                                    static_cast<std::ptrdiff_t>(g.pad_t);
          if (it < 0 || it >= static_cast<std::ptrdiff_t>(g.in_t)) {
            std::fill(dst, dst + g.out_f, T{0});
            continue;
          }
          const T* src = xc + it * g.in_f;
          for (std::size_t of = 0; of < g.out_f; ++of) {
            const std::ptrdiff_t jf = static_cast<std::ptrdiff_t>(of * g.stride_f + j) -
                                      static_cast<std::ptrdiff_t>(g.pad_f);
            dst[of] = (jf < 0 || jf >= static_cast<std::ptrdiff_t>(g.in_f)) ? T{0} : src[jf];
          }
        }
      }
    }
  }
}

// Adjoint of im2col; accumulates into x.
template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* x) {
  const std::size_t P = g.out_t * g.out_f;
  for (std::size_t ci = 0; ci < g.in_ch; ++ci) {
    T* xc = x + ci * g.in_t * g.in_f;
    for (std::size_t i = 0; i < g.k_t; ++i) {
      for (std::size_t j = 0; j < g.k_f; ++j) {
        const T* row = col + ((ci * g.k_t + i) * g.k_f + j) * P;
        for (std::size_t ot = 0; ot < g.out_t; ++ot) {
          const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(ot * g.stride_t + i) -
                                    static_cast<std::ptrdiff_t>(g.pad_t);
          if (it < 0 || it >= static_cast<std::ptrdiff_t>(g.in_t)) continue;
          const T* src = row + ot * g.out_f;
          T* dst = xc + it * g.in_f;
          for (std::size_t of = 0; of < g.out_f; ++of) {
            const std::ptrdiff_t jf = static_cast<std::ptrdiff_t>(of * g.stride_f + j) -
                                      static_cast<std::ptrdiff_t>(g.pad_f);
            if (jf >= 0 && jf < static_cast<std::ptrdiff_t>(g.in_f)) dst[jf] += src[of];
          }
        }
      }
    }
  }
}

template <typename T>
void conv_forward_impl(const ConvGeometry& g, const T* x, const T* w, T* out) {
  const std::size_t K = g.in_ch * g.k_t * g.k_f, P = g.out_t * g.out_f;
  const std::size_t in_stride = g.in_ch * g.in_t * g.in_f, out_stride = g.out_ch * P;
  const long batch = static_cast<long>(g.batch);
#pragma omp parallel if (batch > 1)
  {
    std::vector<T> col(K * P);
#pragma omp for schedule(static)
    for (long b = 0; b < batch; ++b) {
      im2col(g, x + b * in_stride, col.data());
      gemm_impl<T>({g.out_ch, P, K, false, false}, T{1}, w, col.data(), T{0},
                   out + b * out_stride);
    }
  }
}

template <typename T>
void conv_backward_data_impl(const ConvGeometry& g, const T* gout, const T* w, T* gx) {
  const std::size_t K = g.in_ch * g.k_t * g.k_f, P = g.out_t * g.out_f;
  const std::size_t in_stride = g.in_ch * g.in_t * g.in_f, out_stride = g.out_ch * P;
  const long batch = static_cast<long>(g.batch);
#pragma omp parallel if (batch > 1)
  {
    std::vector<T> col(K * P);
#pragma omp for schedule(static)
    for (long b = 0; b < batch; ++b) {
      gemm_impl<T>({K, P, g.out_ch, true, false}, T{1}, w, gout + b * out_stride, T{0},
                   col.data());
      T* dst = gx + b * in_stride;
      std::fill(dst, dst + in_stride, T{0});
      col2im(g, col.data(), dst);
    }
  }
}

template <typename T>
void conv_backward_weight_impl(const ConvGeometry& g, const T* x, const T* gout, T* gw) {
  const std::size_t K = g.in_ch * g.k_t * g.k_f, P = g.out_t * g.out_f;
  const std::size_t in_stride = g.in_ch * g.in_t * g.in_f, out_stride = g.out_ch * P;
  const long batch = static_cast<long>(g.batch);
  std::vector<T> cols(g.batch * K * P);
#pragma omp parallel for schedule(static) if (batch > 1)
  for (long b = 0; b < batch; ++b) im2col(g, x + b * in_stride, cols.data() + b * K * P);
  // Sequential accumulation keeps the summation order fixed.
  for (std::size_t b = 0; b < g.batch; ++b) {
    gemm_impl<T>({g.out_ch, K, P, false, true}, T{1}, gout + b * out_stride,
                 cols.data() + b * K * P, b == 0 ? T{0} : T{1}, gw);
  }
}

template <typename T>
inline T sigmoid(T v) {
  return T{1} / (T{1} + std::exp(-v));
}

template <typename T>
void lstm_forward_impl(const LstmDims& d, const T* x, const T* wx, const T* wh,
                       const T* bias, const T* h0, const T* c0, T* h, T* c, T* gates) {
  const std::size_t N = d.batch, S = d.steps, H = d.hidden, G = 4 * H;
  // Input projection for every (n, t) row at once.
  gemm_impl<T>({N * S, G, d.input, false, false}, T{1}, x, wx, T{0}, gates);
  std::vector<T> hprev(N * H), cprev(N * H), rec(N * G);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t j = 0; j < H; ++j) {
      hprev[n * H + j] = h0 ? h0[n * H + j] : T{0};
      cprev[n * H + j] = c0 ? c0[n * H + j] : T{0};
    }
  const long nn = static_cast<long>(N);
  for (std::size_t s = 0; s < S; ++s) {
    const std::size_t t = d.reverse ? S - 1 - s : s;
    gemm_impl<T>({N, G, H, false, false}, T{1}, hprev.data(), wh, T{0}, rec.data());
#pragma omp parallel for schedule(static) if (N * H >= 4096)
    for (long n = 0; n < nn; ++n) {
      const std::size_t row = n * S + t;
      T* gt = gates + row * G;
      const T* rt = rec.data() + n * G;
      for (std::size_t j = 0; j < H; ++j) {
        const T ig = sigmoid(gt[j] + rt[j] + bias[j]);
        const T fg = sigmoid(gt[H + j] + rt[H + j] + bias[H + j]);
        const T gg = std::tanh(gt[2 * H + j] + rt[2 * H + j] + bias[2 * H + j]);
        const T og = sigmoid(gt[3 * H + j] + rt[3 * H + j] + bias[3 * H + j]);
        const T cv = fg * cprev[n * H + j] + ig * gg;
        const T hv = og * std::tanh(cv);
        gt[j] = ig;
        gt[H + j] = fg;
        gt[2 * H + j] = gg;
        gt[3 * H + j] = og;
        c[row * H + j] = cv;
        h[row * H + j] = hv;
        cprev[n * H + j] = cv;
        hprev[n * H + j] = hv;
      }
    }
  }
}

template <typename T>
void lstm_backward_impl(const LstmDims& d, const T* x, const T* wx, const T* wh,
                        const T* h0, const T* c0, const T* h, const T* c, const T* gates,
                        const T* dh, T* dx, T* dwx, T* dwh, T* dbias) {
  const std::size_t N = d.batch, S = d.steps, H = d.hidden, G = 4 * H;
  std::vector<T> dgates(N * S * G), dh_next(N * H, T{0}), dc_next(N * H, T{0});
  std::vector<T> dpre(N * G), hprev(N * H);
  std::fill(dwh, dwh + H * G, T{0});
  const long nn = static_cast<long>(N);
  for (std::size_t s = S; s-- > 0;) {
    const std::size_t t = d.reverse ? S - 1 - s : s;
#pragma omp parallel for schedule(static) if (N * H >= 4096)
    for (long n = 0; n < nn; ++n) {
      const std::size_t row = n * S + t;
      const T* gt = gates + row * G;
      const bool first = (s == 0);
      const std::size_t prow = first ? 0 : n * S + (d.reverse ? t + 1 : t - 1);
      T* dp = dpre.data() + n * G;
      for (std::size_t j = 0; j < H; ++j) {
        const T cp = first ? (c0 ? c0[n * H + j] : T{0}) : c[prow * H + j];
        hprev[n * H + j] = first ? (h0 ? h0[n * H + j] : T{0}) : h[prow * H + j];
        const T ig = gt[j], fg = gt[H + j], gg = gt[2 * H + j], og = gt[3 * H + j];
        const T tc = std::tanh(c[row * H + j]);
        const T dht = dh[row * H + j] + dh_next[n * H + j];
        const T dct = dht * og * (T{1} - tc * tc) + dc_next[n * H + j];
        dp[j] = dct * gg * ig * (T{1} - ig);
        dp[H + j] = dct * cp * fg * (T{1} - fg);
        dp[2 * H + j] = dct * ig * (T{1} - gg * gg);
        dp[3 * H + j] = dht * tc * og * (T{1} - og);
        dc_next[n * H + j] = dct * fg;
      }
      std::copy(dp, dp + G, dgates.data() + row * G);
    }
    gemm_impl<T>({N, H, G, false, true}, T{1}, dpre.data(), wh, T{0}, dh_next.data());
    gemm_impl<T>({H, G, N, true, false}, T{1}, hprev.data(), dpre.data(), T{1}, dwh);
  }
  gemm_impl<T>({d.input, G, N * S, true, false}, T{1}, x, dgates.data(), T{0}, dwx);
  gemm_impl<T>({N * S, d.input, G, false, true}, T{1}, dgates.data(), wx, T{0}, dx);
  std::fill(dbias, dbias + G, T{0});
  for (std::size_t r = 0; r < N * S; ++r)
    for (std::size_t q = 0; q < G; ++q) dbias[q] += dgates[r * G + q];
}

template <typename T>
const T* opt_ptr(std::span<const T> s) {
  return s.empty() ? nullptr : s.data();
}

}  // namespace

void set_num_threads(int n) {
  omp_set_num_threads(n > 0 ? n : omp_get_num_procs());
}

int num_threads() { return omp_get_max_threads(); }

#define DCCRN_DEFINE_KERNELS(T)                                                          \
  void gemm(const GemmDims& d, T alpha, std::span<const T> a, std::span<const T> b,     \
            T beta, std::span<T> c) {                                                   \
    gemm_impl<T>(d, alpha, a.data(), b.data(), beta, c.data());                         \
  }                                                                                     \
  void conv_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,  \
                    std::span<T> out) {                                                 \
    conv_forward_impl<T>(g, x.data(), w.data(), out.data());                            \
  }                                                                                     \
  void conv_backward_data(const ConvGeometry& g, std::span<const T> gout,               \
                          std::span<const T> w, std::span<T> gx) {                      \
    conv_backward_data_impl<T>(g, gout.data(), w.data(), gx.data());                    \
  }                                                                                     \
  void conv_backward_weight(const ConvGeometry& g, std::span<const T> x,                \
                            std::span<const T> gout, std::span<T> gw) {                 \
    conv_backward_weight_impl<T>(g, x.data(), gout.data(), gw.data());                  \
  }                                                                                     \
  void lstm_forward(const LstmDims& d, std::span<const T> x, std::span<const T> wx,     \
                    std::span<const T> wh, std::span<const T> bias,                     \
                    std::span<const T> h0, std::span<const T> c0, std::span<T> h,       \
                    std::span<T> c, std::span<T> gates) {                               \
    lstm_forward_impl<T>(d, x.data(), wx.data(), wh.data(), bias.data(), opt_ptr(h0),   \
                         opt_ptr(c0), h.data(), c.data(), gates.data());                \
  }                                                                                     \
  void lstm_backward(const LstmDims& d, std::span<const T> x, std::span<const T> wx,    \
                     std::span<const T> wh, std::span<const T> h0,                      \
                     std::span<const T> c0, std::span<const T> h, std::span<const T> c, \
                     std::span<const T> gates, std::span<const T> dh, std::span<T> dx,  \
                     std::span<T> dwx, std::span<T> dwh, std::span<T> dbias) {          \
    lstm_backward_impl<T>(d, x.data(), wx.data(), wh.data(), opt_ptr(h0), opt_ptr(c0),  \
                          h.data(), c.data(), gates.data(), dh.data(), dx.data(),       \
                          dwx.data(), dwh.data(), dbias.data());                        \
  }

DCCRN_DEFINE_KERNELS(float)
DCCRN_DEFINE_KERNELS(double)

}  // namespace dccrn::kernels::parallel
