// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Reference kernels: straight loops in the order the formulas are written.

#include <algorithm>
#include <cmath>
#include <vector>

#include "dccrn/kernels.hpp"

namespace dccrn::kernels::serial {
namespace {

template <typename T>
void gemm_impl(const GemmDims& d, T alpha, std::span<const T> a, std::span<const T> b,
               T beta, std::span<T> c) {
  for (std::size_t i = 0; i < d.m; ++i) {
    for (std::size_t j = 0; j < d.n; ++j) {
      T acc = 0;
      for (std::size_t p = 0; p < d.k; ++p) {
        const T av = d.trans_a ? a[p * d.m + i] : a[i * d.k + p];
        const T bv = d.trans_b ? b[j * d.k + p] : b[p * d.n + j];
        acc += av * bv;
      }
      T& out = c[i * d.n + j];
      out = alpha * acc + (beta == T{0} ? T{0} : beta * out);
    }
  }
}

// Input coordinate of an output position plus tap; false when it falls in padding.
inline bool source_index(std::size_t out, std::size_t tap, std::size_t stride,
                         std::size_t pad, std::size_t extent, std::size_t* src) {
  const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(out * stride + tap) -
                             static_cast<std::ptrdiff_t>(pad);
  if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(extent)) return false;
  *src = static_cast<std::size_t>(pos);
  return true;
}

template <typename Fn>
void for_each_tap(const ConvGeometry& g, Fn&& fn) {
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t co = 0; co < g.out_ch; ++co)
      for (std::size_t ot = 0; ot < g.out_t; ++ot)
        for (std::size_t of = 0; of < g.out_f; ++of)
          for (std::size_t ci = 0; ci < g.in_ch; ++ci)
            for (std::size_t i = 0; i < g.k_t; ++i) {
              std::size_t it;
              if (!source_index(ot, i, g.stride_t, g.pad_t, g.in_t, &it)) continue;
              for (std::size_t j = 0; j < g.k_f; ++j) {
                std::size_t jf;
                if (!source_index(of, j, g.stride_f, g.pad_f, g.in_f, &jf)) continue;
                const std::size_t xi = ((b * g.in_ch + ci) * g.in_t + it) * g.in_f + jf;
                const std::size_t wi = ((co * g.in_ch + ci) * g.k_t + i) * g.k_f + j;
                const std::size_t oi = ((b * g.out_ch + co) * g.out_t + ot) * g.out_f + of;
                fn(xi, wi, oi);
              }
            }
}

template <typename T>
void conv_forward_impl(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                       std::span<T> out) {
  std::fill(out.begin(), out.end(), T{0});
  for_each_tap(g, [&](std::size_t xi, std::size_t wi, std::size_t oi) {
    out[oi] += w[wi] * x[xi];
  });
}

template <typename T>
void conv_backward_data_impl(const ConvGeometry& g, std::span<const T> gout,
                             std::span<const T> w, std::span<T> gx) {
  std::fill(gx.begin(), gx.end(), T{0});
  for_each_tap(g, [&](std::size_t xi, std::size_t wi, std::size_t oi) {
    gx[xi] += w[wi] * gout[oi];
  });
}

template <typename T>
void conv_backward_weight_impl(const ConvGeometry& g, std::span<const T> x,
                               std::span<const T> gout, std::span<T> gw) {
  std::fill(gw.begin(), gw.end(), T{0});
  for_each_tap(g, [&](std::size_t xi, std::size_t wi, std::size_t oi) {
    gw[wi] += x[xi] * gout[oi];
  });
}

template <typename T>
T sigmoid(T v) {
  return T{1} / (T{1} + std::exp(-v));
}

template <typename T>
void lstm_forward_impl(const LstmDims& d, std::span<const T> x, std::span<const T> wx,
                       std::span<const T> wh, std::span<const T> bias,
                       std::span<const T> h0, std::span<const T> c0, std::span<T> h,
                       std::span<T> c, std::span<T> gates) {
  const std::size_t H = d.hidden, G = 4 * H;
  std::vector<T> hprev(H), cprev(H), pre(G);
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t j = 0; j < H; ++j) {
      hprev[j] = h0.empty() ? T{0} : h0[n * H + j];
      cprev[j] = c0.empty() ? T{0} : c0[n * H + j];
    }
    for (std::size_t s = 0; s < d.steps; ++s) {
      const std::size_t t = d.reverse ? d.steps - 1 - s : s;
      const std::size_t row = n * d.steps + t;
      for (std::size_t q = 0; q < G; ++q) {
        T acc = bias[q];
        for (std::size_t i = 0; i < d.input; ++i) acc += x[row * d.input + i] * wx[i * G + q];
        for (std::size_t j = 0; j < H; ++j) acc += hprev[j] * wh[j * G + q];
        pre[q] = acc;
      }
      for (std::size_t j = 0; j < H; ++j) {
        const T ig = sigmoid(pre[j]);
        const T fg = sigmoid(pre[H + j]);
        const T gg = std::tanh(pre[2 * H + j]);
        const T og = sigmoid(pre[3 * H + j]);
        const T cv = fg * cprev[j] + ig * gg;
        const T hv = og * std::tanh(cv);
        gates[row * G + j] = ig;
        gates[row * G + H + j] = fg;
        gates[row * G + 2 * H + j] = gg;
        gates[row * G + 3 * H + j] = og;
        c[row * H + j] = cv;
        h[row * H + j] = hv;
        cprev[j] = cv;
        hprev[j] = hv;
      }
    }
  }
}

template <typename T>
void lstm_backward_impl(const LstmDims& d, std::span<const T> x, std::span<const T> wx,
                        std::span<const T> wh, std::span<const T> h0,
                        std::span<const T> c0, std::span<const T> h, std::span<const T> c,
                        std::span<const T> gates, std::span<const T> dh, std::span<T> dx,
                        std::span<T> dwx, std::span<T> dwh, std::span<T> dbias) {
  const std::size_t H = d.hidden, G = 4 * H;
  std::fill(dx.begin(), dx.end(), T{0});
  std::fill(dwx.begin(), dwx.end(), T{0});
  std::fill(dwh.begin(), dwh.end(), T{0});
  std::fill(dbias.begin(), dbias.end(), T{0});
  std::vector<T> dh_next(H), dc_next(H), dpre(G), hprev(H), cprev(H);
  for (std::size_t n = 0; n < d.batch; ++n) {
    std::fill(dh_next.begin(), dh_next.end(), T{0});
    std::fill(dc_next.begin(), dc_next.end(), T{0});
    for (std::size_t s = d.steps; s-- > 0;) {
      const std::size_t t = d.reverse ? d.steps - 1 - s : s;
      const std::size_t row = n * d.steps + t;
      for (std::size_t j = 0; j < H; ++j) {
        if (s == 0) {
          hprev[j] = h0.empty() ? T{0} : h0[n * H + j];
          cprev[j] = c0.empty() ? T{0} : c0[n * H + j];
        } else {
          const std::size_t tp = d.reverse ? t + 1 : t - 1;
          hprev[j] = h[(n * d.steps + tp) * H + j];
          cprev[j] = c[(n * d.steps + tp) * H + j];
        }
      }
      for (std::size_t j = 0; j < H; ++j) {
        const T ig = gates[row * G + j];
        const T fg = gates[row * G + H + j];
        const T gg = gates[row * G + 2 * H + j];
        const T og = gates[row * G + 3 * H + j];
        const T tc = std::tanh(c[row * H + j]);
        const T dht = dh[row * H + j] + dh_next[j];
        const T dct = dht * og * (T{1} - tc * tc) + dc_next[j];
        dpre[j] = dct * gg * ig * (T{1} - ig);
        dpre[H + j] = dct * cprev[j] * fg * (T{1} - fg);
        dpre[2 * H + j] = dct * ig * (T{1} - gg * gg);
        dpre[3 * H + j] = dht * tc * og * (T{1} - og);
        dc_next[j] = dct * fg;
      }
      for (std::size_t j = 0; j < H; ++j) {
        T acc = 0;
        for (std::size_t q = 0; q < G; ++q) {
          acc += dpre[q] * wh[j * G + q];
          dwh[j * G + q] += hprev[j] * dpre[q];
        }
        dh_next[j] = acc;
      }
      for (std::size_t i = 0; i < d.input; ++i) {
        T acc = 0;
        for (std::size_t q = 0; q < G; ++q) {
          acc += dpre[q] * wx[i * G + q];
          dwx[i * G + q] += x[row * d.input + i] * dpre[q];
        }
        dx[row * d.input + i] = acc;
      }
      for (std::size_t q = 0; q < G; ++q) dbias[q] += dpre[q];
    }
  }
}

}  // namespace

#define DCCRN_DEFINE_KERNELS(T)                                                          \
  void gemm(const GemmDims& d, T alpha, std::span<const T> a, std::span<const T> b,     \
            T beta, std::span<T> c) {                                                   \
    gemm_impl<T>(d, alpha, a, b, beta, c);                                              \
  }                                                                                     \
  void conv_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,  \
                    std::span<T> out) {                                                 \
    conv_forward_impl<T>(g, x, w, out);                                                 \
  }                                                                                     \
  void conv_backward_data(const ConvGeometry& g, std::span<const T> gout,               \
                          std::span<const T> w, std::span<T> gx) {                      \
    conv_backward_data_impl<T>(g, gout, w, gx);                                         \
  }                                                                                     \
  void conv_backward_weight(const ConvGeometry& g, std::span<const T> x,                \
                            std::span<const T> gout, std::span<T> gw) {                 \
    conv_backward_weight_impl<T>(g, x, gout, gw);                                       \
  }                                                                                     \
  void lstm_forward(const LstmDims& d, std::span<const T> x, std::span<const T> wx,     \
                    std::span<const T> wh, std::span<const T> bias,                     \
                    std::span<const T> h0, std::span<const T> c0, std::span<T> h,       \
                    std::span<T> c, std::span<T> gates) {                               \
    lstm_forward_impl<T>(d, x, wx, wh, bias, h0, c0, h, c, gates);                      \
  }                                                                                     \
  void lstm_backward(const LstmDims& d, std::span<const T> x, std::span<const T> wx,    \
                     std::span<const T> wh, std::span<const T> h0,                      \
                     std::span<const T> c0, std::span<const T> h, std::span<const T> c, \
                     std::span<const T> gates, std::span<const T> dh, std::span<T> dx,  \
                     std::span<T> dwx, std::span<T> dwh, std::span<T> dbias) {          \
    lstm_backward_impl<T>(d, x, wx, wh, h0, c0, h, c, gates, dh, dx, dwx, dwh, dbias);  \
  }

DCCRN_DEFINE_KERNELS(float)
DCCRN_DEFINE_KERNELS(double)

}  // namespace dccrn::kernels::serial
