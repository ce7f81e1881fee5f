// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Reverse-mode automatic differentiation over dccrn::Tensor.
//
// Every op returns a Var. When gradient recording is enabled and at least one
// input requires a gradient, the result keeps references to its inputs plus a
// closure that pushes the output gradient back into them. backward() walks
// the recorded graph once in reverse topological order. With recording off
// (NoGradGuard) ops are plain value computations, which is the inference path.
//
// Broadcasting: binary ops accept a second operand whose shape equals a
// trailing suffix of the first operand's shape, or a single-element tensor.
// Nothing else broadcasts.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <type_traits>
#include <utility>
#include <string>
#include <vector>

#include "dccrn/tensor.hpp"

namespace dccrn::ad {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";

  // Gradient buffer, zero-initialized on first use.
  Tensor<T>& grad_buffer();
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  // Leaves only: in-place parameter updates.
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& mutable_grad() { return node_->grad_buffer(); }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t i) const { return node_->value.dim(i); }
  std::size_t size() const { return node_->value.size(); }
  const char* op() const { return node_->op; }
  void zero_grad();

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

bool grad_enabled();

// Disables graph recording for the lifetime of the guard (per thread).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds an op result. backward receives the result node; its grad is set.
template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> inputs, const char* op,
               std::function<void(Node<T>&)> backward);

// Nodes reachable from root that require gradients, parents before children.
template <typename T>
std::vector<Node<T>*> topo_order(const Var<T>& root);

// Seeds d(root)/d(root) = 1 (root must hold one element) and accumulates
// gradients into every reachable node.
template <typename T>
void backward(const Var<T>& root);

// Seeds an arbitrary output gradient of root's shape.
template <typename T>
void backward(const Var<T>& root, const Tensor<T>& seed);

// ---- elementwise ------------------------------------------------------------
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
// a / (b + eps). eps stays 0 outside loss and normalization code.
template <typename T> Var<T> div(const Var<T>& a, const Var<T>& b, T eps = T{0});
template <typename T> Var<T> neg(const Var<T>& a);
template <typename T> Var<T> add_scalar(const Var<T>& a, T s);
template <typename T> Var<T> mul_scalar(const Var<T>& a, T s);
template <typename T> Var<T> square(const Var<T>& a);
template <typename T> Var<T> exp(const Var<T>& a);
template <typename T> Var<T> log(const Var<T>& a);
template <typename T> Var<T> erf(const Var<T>& a);
template <typename T> Var<T> sigmoid(const Var<T>& a);
template <typename T> Var<T> tanh(const Var<T>& a);
// Parametric ReLU with one learnable slope for the whole tensor.
template <typename T> Var<T> prelu(const Var<T>& a, const Var<T>& slope);

// ---- shape ------------------------------------------------------------------
template <typename T> Var<T> reshape(const Var<T>& a, Shape shape);
template <typename T> Var<T> permute(const Var<T>& a, const std::vector<std::size_t>& perm);
template <typename T> Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis);
template <typename T> Var<T> slice(const Var<T>& a, std::size_t axis, std::size_t start,
                                   std::size_t length);

// ---- reductions ---------------------------------------------------------------
template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> sum(const Var<T>& a, std::size_t axis);
template <typename T> Var<T> mean(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a, std::size_t axis);
// Population variance over all elements.
template <typename T> Var<T> var(const Var<T>& a);

// ---- linear algebra -------------------------------------------------------------
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);

struct Conv2dSpec {
  std::size_t stride_t = 1, stride_f = 1;
  std::size_t pad_t_lo = 0, pad_t_hi = 0;
  std::size_t pad_f_lo = 0, pad_f_hi = 0;
  // Transposed convolution only: extra trailing outputs, < stride.
  std::size_t out_pad_t = 0, out_pad_f = 0;
};

// x [B, Ci, T, F], w [Co, Ci, Kt, Kf], optional bias [Co].
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w,
              const std::type_identity_t<Var<T>>* bias, const Conv2dSpec& spec);

// Adjoint of conv2d with the same spec: x [B, Ci, T, F], w [Ci, Co, Kt, Kf].
// Output extent (n - 1) * stride + k - pad_lo - pad_hi + out_pad per axis.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w,
                        const std::type_identity_t<Var<T>>* bias,
                        const Conv2dSpec& spec);

// ---- normalization ---------------------------------------------------------------
template <typename T>
struct BatchNormBuffers {
  Tensor<T> running_mean;
  Tensor<T> running_var;
};

// Per-channel normalization of x [B, C, ...]. Training mode uses batch
// statistics and updates the running buffers; eval mode uses the buffers.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  BatchNormBuffers<T>& buffers, bool training, T momentum = T(0.1),
                  T eps = T(1e-5));

enum class NormSpan { kUtterance, kCausal };

// Running statistics behind NormSpan::kCausal for one (b, k) plane. The
// offline op and the streaming engine both go through this so their results
// agree exactly.
struct CausalNormStats {
  double s1 = 0, s2 = 0;
  std::size_t count = 0;

  // Adds one frame of n values; returns {mean, 1 / sqrt(var + eps)} over all
  // frames seen so far.
  template <typename T>
  std::pair<double, double> push(const T* frame, std::size_t n, T eps) {
    double f1 = 0, f2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = frame[i];
      f1 += v;
      f2 += v * v;
    }
    s1 += f1;
    s2 += f2;
    count += n;
    const double cnt = static_cast<double>(count);
    const double m = s1 / cnt;
    const double var = std::max(s2 / cnt - m * m, 0.0);
    return {m, 1.0 / std::sqrt(var + eps)};
  }

  template <typename T>
  static T apply(T x, double mean, double rstd, T gamma, T beta) {
    return static_cast<T>((x - mean) * rstd * gamma + beta);
  }
};

// x [B, K, T, F], gamma/beta [K]. Statistics per (b, k) over T x F, or with
// kCausal over frames 0..t only.
template <typename T>
Var<T> instance_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                     NormSpan span, T eps = T(1e-5));

// ---- recurrent -------------------------------------------------------------------
// x [N, S, I] -> h [N, S, H]; zero initial state.
template <typename T>
Var<T> lstm(const Var<T>& x, const Var<T>& wx, const Var<T>& wh, const Var<T>& bias,
            bool reverse);

// ---- filtering ---------------------------------------------------------------------
// Per-bin FIR over a (taps_t x taps_f) neighbourhood, causal in time and
// centred in frequency:
//   out[b,k,t,f] = sum_{i,j} m[b, k*taps + i*taps_f + j, t, f] * y[b, k, t-i, f-c+j]
// with c = taps_f / 2 and zero outside y.
template <typename T>
Var<T> tap_filter(const Var<T>& m, const Var<T>& y, std::size_t taps_t, std::size_t taps_f);

}  // namespace dccrn::ad
