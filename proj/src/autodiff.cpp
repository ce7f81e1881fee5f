// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dccrn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>
#include <unordered_set>

#include "dccrn/kernels.hpp"

namespace dccrn::ad {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T>& Node<T>::grad_buffer() {
  if (grad.empty()) grad = Tensor<T>(value.shape());
  return grad;
}

template <typename T>
Var<T>::Var(Tensor<T> value, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

template <typename T>
void Var<T>::zero_grad() {
  if (!node_->grad.empty()) node_->grad.fill(T{0});
}

template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> inputs, const char* op,
               std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = op;
  if (grad_enabled()) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Var<T>& v) { return v.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(inputs.size());
      for (const auto& v : inputs) node->parents.push_back(v.node());
      node->backward_fn = std::move(backward);
    }
  }
  return Var<T>(std::move(node));
}

template <typename T>
std::vector<Node<T>*> topo_order(const Var<T>& root) {
  std::vector<Node<T>*> order;
  if (!root.requires_grad()) return order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

template <typename T>
void backward(const Var<T>& root, const Tensor<T>& seed) {
  if (!root.requires_grad()) return;
  if (seed.shape() != root.shape())
    throw ShapeError("backward seed " + shape_str(seed.shape()) + " vs output " +
                     shape_str(root.shape()));
  auto order = topo_order(root);
  Tensor<T>& g = root.node()->grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

template <typename T>
void backward(const Var<T>& root) {
  if (root.size() != 1)
    throw ShapeError("backward() without seed needs a single-element output, got " +
                     shape_str(root.shape()));
  backward(root, Tensor<T>(root.shape(), T{1}));
}

namespace {

template <typename T>
bool wants_grad(const Node<T>& self, std::size_t i) {
  return self.parents[i]->requires_grad;
}

template <typename T>
void accumulate(Node<T>& dst, const Tensor<T>& g) {
  Tensor<T>& buf = dst.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

void check_broadcast(const Shape& a, const Shape& b, const char* op) {
  if (shape_size(b) == 1) return;
  bool ok = b.size() <= a.size();
  for (std::size_t i = 0; ok && i < b.size(); ++i)
    ok = a[a.size() - b.size() + i] == b[i];
  if (!ok)
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(b) + " onto " +
                     shape_str(a));
}

// Binary op with trailing broadcast of b. f(a, b) -> out; da/db given (a, b, out).
template <typename T, typename F, typename DA, typename DB>
Var<T> binary(const Var<T>& a, const Var<T>& b, const char* name, F f, DA da, DB db) {
  check_broadcast(a.shape(), b.shape(), name);
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t nb = bv.size();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i % nb]);
  return make_op<T>(std::move(out), {a, b}, name, [da, db](Node<T>& self) {
    const auto& x = self.parents[0]->value;
    const auto& y = self.parents[1]->value;
    const std::size_t n = y.size();
    if (wants_grad(self, 0)) {
      auto& gx = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < x.size(); ++i)
        gx[i] += self.grad[i] * da(x[i], y[i % n], self.value[i]);
    }
    if (wants_grad(self, 1)) {
      auto& gy = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < x.size(); ++i)
        gy[i % n] += self.grad[i] * db(x[i], y[i % n], self.value[i]);
    }
  });
}

// Unary op; d(x, y) is the local derivative given input and output.
template <typename T, typename F, typename D>
Var<T> unary(const Var<T>& a, const char* name, F f, D d) {
  const auto& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return make_op<T>(std::move(out), {a}, name, [d](Node<T>& self) {
    const auto& x = self.parents[0]->value;
    auto& gx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += self.grad[i] * d(x[i], self.value[i]);
  });
}

// Splits shape around axis into (outer, extent, inner).
std::tuple<std::size_t, std::size_t, std::size_t> split_axis(const Shape& s, std::size_t axis) {
  if (axis >= s.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  return {outer, s[axis], inner};
}

template <typename T>
void permute_copy(const Tensor<T>& in, const std::vector<std::size_t>& perm, Tensor<T>& out,
                  bool accumulate_out) {
  const Shape& is = in.shape();
  const std::size_t r = is.size();
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * is[i];
  // Stride in the input for each output axis.
  std::vector<std::size_t> step(r), ext(r);
  for (std::size_t i = 0; i < r; ++i) {
    step[i] = in_stride[perm[i]];
    ext[i] = is[perm[i]];
  }
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  const std::size_t n = in.size();
  const std::size_t last = r - 1;
  for (std::size_t o = 0; o < n;) {
    // Innermost axis as a tight loop.
    const std::size_t len = ext[last], st = step[last];
    if (accumulate_out) {
      for (std::size_t k = 0; k < len; ++k) out[o + k] += in[src + k * st];
    } else {
      for (std::size_t k = 0; k < len; ++k) out[o + k] = in[src + k * st];
    }
    o += len;
    for (std::size_t ax = last; ax-- > 0;) {
      src += step[ax];
      if (++idx[ax] < ext[ax]) break;
      src -= step[ax] * ext[ax];
      idx[ax] = 0;
    }
  }
}

template <typename T>
std::span<const T> cspan(const Tensor<T>& t) {
  return t.data();
}

}  // namespace

// ---- elementwise --------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return binary(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T, T) { return T{1}; },
      [](T, T, T) { return T{1}; });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return binary(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T, T) { return T{1}; },
      [](T, T, T) { return T{-1}; });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return binary(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y, T) { return y; },
      [](T x, T, T) { return x; });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b, T eps) {
  return binary(
      a, b, "div", [eps](T x, T y) { return x / (y + eps); },
      [eps](T, T y, T) { return T{1} / (y + eps); },
      [eps](T x, T y, T) { return -x / ((y + eps) * (y + eps)); });
}

template <typename T>
Var<T> neg(const Var<T>& a) {
  return unary(a, "neg", [](T x) { return -x; }, [](T, T) { return T{-1}; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
  return unary(a, "add_scalar", [s](T x) { return x + s; }, [](T, T) { return T{1}; });
}

template <typename T>
Var<T> mul_scalar(const Var<T>& a, T s) {
  return unary(a, "mul_scalar", [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  return unary(a, "square", [](T x) { return x * x; }, [](T x, T) { return T{2} * x; });
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  return unary(a, "exp", [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log(const Var<T>& a) {
  return unary(a, "log", [](T x) { return std::log(x); }, [](T x, T) { return T{1} / x; });
}

template <typename T>
Var<T> erf(const Var<T>& a) {
  const T k = T{2} / std::sqrt(std::numbers::pi_v<T>);
  return unary(a, "erf", [](T x) { return std::erf(x); },
               [k](T x, T) { return k * std::exp(-x * x); });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  return unary(a, "sigmoid", [](T x) { return T{1} / (T{1} + std::exp(-x)); },
               [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  return unary(a, "tanh", [](T x) { return std::tanh(x); },
               [](T, T y) { return T{1} - y * y; });
}

template <typename T>
Var<T> prelu(const Var<T>& a, const Var<T>& slope) {
  if (slope.size() != 1) throw ShapeError("prelu: slope must hold one value");
  const T s = slope.value()[0];
  const auto& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] > T{0} ? av[i] : s * av[i];
  return make_op<T>(std::move(out), {a, slope}, "prelu", [](Node<T>& self) {
    const auto& x = self.parents[0]->value;
    const T sl = self.parents[1]->value[0];
    if (wants_grad(self, 0)) {
      auto& gx = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < x.size(); ++i)
        gx[i] += self.grad[i] * (x[i] > T{0} ? T{1} : sl);
    }
    if (wants_grad(self, 1)) {
      T acc = 0;
      for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] <= T{0}) acc += self.grad[i] * x[i];
      self.parents[1]->grad_buffer()[0] += acc;
    }
  });
}

// ---- shape --------------------------------------------------------------------

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  if (shape_size(shape) != a.size())
    throw ShapeError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  return make_op<T>(a.value().reshaped(std::move(shape)), {a}, "reshape",
                    [](Node<T>& self) { accumulate(*self.parents[0], self.grad); });
}

template <typename T>
Var<T> permute(const Var<T>& a, const std::vector<std::size_t>& perm) {
  const Shape& s = a.shape();
  if (perm.size() != s.size()) throw ShapeError("permute: rank mismatch");
  std::vector<bool> used(s.size(), false);
  Shape out_shape(s.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= s.size() || used[perm[i]]) throw ShapeError("permute: invalid permutation");
    used[perm[i]] = true;
    out_shape[i] = s[perm[i]];
  }
  Tensor<T> out(out_shape);
  if (!out.empty()) permute_copy(a.value(), perm, out, false);
  std::vector<std::size_t> inverse(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inverse[perm[i]] = i;
  return make_op<T>(std::move(out), {a}, "permute", [inverse](Node<T>& self) {
    if (self.grad.empty()) return;
    permute_copy(self.grad, inverse, self.parents[0]->grad_buffer(), true);
  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape out_shape = parts[0].shape();
  if (axis >= out_shape.size()) throw ShapeError("concat: axis out of range");
  std::size_t total = 0;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != out_shape.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != out_shape[i])
        throw ShapeError("concat: " + shape_str(s) + " vs " + shape_str(out_shape));
    lens.push_back(s[axis]);
    total += s[axis];
  }
  out_shape[axis] = total;
  auto [outer, ext, inner] = split_axis(out_shape, axis);
  (void)ext;
  Tensor<T> out(out_shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& v = parts[p].value();
    const std::size_t block = lens[p] * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(v.ptr() + o * block, block, out.ptr() + (o * total + offset) * inner);
    offset += lens[p];
  }
  return make_op<T>(std::move(out), parts, "concat",
                    [lens, outer, total, inner](Node<T>& self) {
                      std::size_t off = 0;
                      for (std::size_t p = 0; p < lens.size(); ++p) {
                        const std::size_t block = lens[p] * inner;
                        if (wants_grad(self, p)) {
                          auto& g = self.parents[p]->grad_buffer();
                          for (std::size_t o = 0; o < outer; ++o) {
                            const T* src = self.grad.ptr() + (o * total + off) * inner;
                            T* dst = g.ptr() + o * block;
                            for (std::size_t k = 0; k < block; ++k) dst[k] += src[k];
                          }
                        }
                        off += lens[p];
                      }
                    });
}

template <typename T>
Var<T> slice(const Var<T>& a, std::size_t axis, std::size_t start, std::size_t length) {
  auto [outer, ext, inner] = split_axis(a.shape(), axis);
  if (start + length > ext)
    throw ShapeError("slice [" + std::to_string(start) + ", +" + std::to_string(length) +
                     ") exceeds axis of " + shape_str(a.shape()));
  Shape out_shape = a.shape();
  out_shape[axis] = length;
  Tensor<T> out(out_shape);
  const auto& v = a.value();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(v.ptr() + (o * ext + start) * inner, length * inner,
                out.ptr() + o * length * inner);
  return make_op<T>(std::move(out), {a}, "slice",
                    [outer, ext, inner, start, length](Node<T>& self) {
                      auto& g = self.parents[0]->grad_buffer();
                      for (std::size_t o = 0; o < outer; ++o) {
                        const T* src = self.grad.ptr() + o * length * inner;
                        T* dst = g.ptr() + (o * ext + start) * inner;
                        for (std::size_t k = 0; k < length * inner; ++k) dst[k] += src[k];
                      }
                    });
}

// ---- reductions ---------------------------------------------------------------

template <typename T>
Var<T> sum(const Var<T>& a) {
  T acc = 0;
  for (T v : a.value().data()) acc += v;
  return make_op<T>(Tensor<T>::scalar(acc), {a}, "sum", [](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    const T s = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s;
  });
}

template <typename T>
Var<T> sum(const Var<T>& a, std::size_t axis) {
  auto [outer, ext, inner] = split_axis(a.shape(), axis);
  Shape out_shape;
  for (std::size_t i = 0; i < a.shape().size(); ++i)
    if (i != axis) out_shape.push_back(a.shape()[i]);
  if (out_shape.empty()) out_shape = {1};
  Tensor<T> out(out_shape);
  const auto& v = a.value();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t e = 0; e < ext; ++e)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += v[(o * ext + e) * inner + i];
  return make_op<T>(std::move(out), {a}, "sum_axis", [outer, ext, inner](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t e = 0; e < ext; ++e)
        for (std::size_t i = 0; i < inner; ++i)
          g[(o * ext + e) * inner + i] += self.grad[o * inner + i];
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return mul_scalar(sum(a), T{1} / static_cast<T>(a.size()));
}

template <typename T>
Var<T> mean(const Var<T>& a, std::size_t axis) {
  return mul_scalar(sum(a, axis), T{1} / static_cast<T>(a.shape().at(axis)));
}

template <typename T>
Var<T> var(const Var<T>& a) {
  const auto& v = a.value();
  const T n = static_cast<T>(v.size());
  T m = 0;
  for (T x : v.data()) m += x;
  m /= n;
  T acc = 0;
  for (T x : v.data()) acc += (x - m) * (x - m);
  return make_op<T>(Tensor<T>::scalar(acc / n), {a}, "var", [m, n](Node<T>& self) {
    const auto& x = self.parents[0]->value;
    auto& g = self.parents[0]->grad_buffer();
    const T s = self.grad[0] * T{2} / n;
    for (std::size_t i = 0; i < x.size(); ++i) g[i] += s * (x[i] - m);
  });
}

// ---- linear algebra -----------------------------------------------------------

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out({m, n});
  kernels::parallel::gemm({m, n, k, false, false}, T{1}, cspan(a.value()),
                             cspan(b.value()), T{0}, out.data());
  return make_op<T>(std::move(out), {a, b}, "matmul", [m, n, k](Node<T>& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (wants_grad(self, 0))
      kernels::parallel::gemm({m, k, n, false, true}, T{1}, cspan(self.grad), cspan(bv),
                                 T{1}, self.parents[0]->grad_buffer().data());
    if (wants_grad(self, 1))
      kernels::parallel::gemm({k, n, m, true, false}, T{1}, cspan(av), cspan(self.grad),
                                 T{1}, self.parents[1]->grad_buffer().data());
  });
}

namespace {

template <typename T>
void add_bias(Tensor<T>& out, const Tensor<T>& bias, std::size_t batch, std::size_t ch,
              std::size_t plane) {
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      T* p = out.ptr() + (b * ch + c) * plane;
      const T v = bias[c];
      for (std::size_t i = 0; i < plane; ++i) p[i] += v;
    }
}

template <typename T>
void bias_grad(const Tensor<T>& g, Tensor<T>& gb, std::size_t batch, std::size_t ch,
               std::size_t plane) {
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const T* p = g.ptr() + (b * ch + c) * plane;
      T acc = 0;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      gb[c] += acc;
    }
}

template <typename T>
void add_into(Tensor<T>& dst, const std::vector<T>& src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

void check_rank4(const Shape& s, const char* what) {
  if (s.size() != 4)
    throw ShapeError(std::string(what) + " must be rank 4, got " + shape_str(s));
}

std::size_t conv_extent(std::size_t in, std::size_t lo, std::size_t hi, std::size_t k,
                        std::size_t stride, const char* axis) {
  if (stride == 0) throw ShapeError(std::string("conv2d: zero stride on ") + axis);
  if (in + lo + hi < k)
    throw ShapeError(std::string("conv2d: kernel ") + std::to_string(k) +
                     " larger than padded " + axis + " extent " + std::to_string(in + lo + hi));
  return (in + lo + hi - k) / stride + 1;
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w,
              const std::type_identity_t<Var<T>>* bias, const Conv2dSpec& spec) {
  check_rank4(x.shape(), "conv2d input");
  check_rank4(w.shape(), "conv2d weight");
  if (x.dim(1) != w.dim(1))
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " vs weight " +
                     shape_str(w.shape()));
  kernels::ConvGeometry g;
  g.batch = x.dim(0);
  g.in_ch = x.dim(1);
  g.in_t = x.dim(2);
  g.in_f = x.dim(3);
  g.out_ch = w.dim(0);
  g.k_t = w.dim(2);
  g.k_f = w.dim(3);
  g.stride_t = spec.stride_t;
  g.stride_f = spec.stride_f;
  g.pad_t = spec.pad_t_lo;
  g.pad_f = spec.pad_f_lo;
  g.out_t = conv_extent(g.in_t, spec.pad_t_lo, spec.pad_t_hi, g.k_t, g.stride_t, "time");
  g.out_f = conv_extent(g.in_f, spec.pad_f_lo, spec.pad_f_hi, g.k_f, g.stride_f, "frequency");
  Tensor<T> out({g.batch, g.out_ch, g.out_t, g.out_f});
  kernels::parallel::conv_forward(g, cspan(x.value()), cspan(w.value()), out.data());
  std::vector<Var<T>> inputs{x, w};
  if (bias) {
    if (bias->size() != g.out_ch) throw ShapeError("conv2d: bias size mismatch");
    add_bias(out, bias->value(), g.batch, g.out_ch, g.out_t * g.out_f);
    inputs.push_back(*bias);
  }
  return make_op<T>(std::move(out), std::move(inputs), "conv2d", [g](Node<T>& self) {
    if (wants_grad(self, 0)) {
      std::vector<T> gx(g.in_size());
      kernels::parallel::conv_backward_data(g, cspan(self.grad),
                                               cspan(self.parents[1]->value), gx);
      add_into(self.parents[0]->grad_buffer(), gx);
    }
    if (wants_grad(self, 1)) {
      std::vector<T> gw(g.weight_size());
      kernels::parallel::conv_backward_weight(g, cspan(self.parents[0]->value),
                                                 cspan(self.grad), gw);
      add_into(self.parents[1]->grad_buffer(), gw);
    }
    if (self.parents.size() > 2 && wants_grad(self, 2))
      bias_grad(self.grad, self.parents[2]->grad_buffer(), g.batch, g.out_ch,
                g.out_t * g.out_f);
  });
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w,
                        const std::type_identity_t<Var<T>>* bias,
                        const Conv2dSpec& spec) {
  check_rank4(x.shape(), "conv_transpose2d input");
  check_rank4(w.shape(), "conv_transpose2d weight");
  if (x.dim(1) != w.dim(0))
    throw ShapeError("conv_transpose2d: input " + shape_str(x.shape()) + " vs weight " +
                     shape_str(w.shape()));
  if (spec.stride_t == 0 || spec.stride_f == 0)
    throw ShapeError("conv_transpose2d: zero stride");
  if (spec.out_pad_t >= spec.stride_t || spec.out_pad_f >= spec.stride_f)
    throw ShapeError("conv_transpose2d: output padding must be smaller than stride");
  kernels::ConvGeometry g;
  g.batch = x.dim(0);
  g.out_ch = x.dim(1);  // conv-view: our input is the conv output
  g.out_t = x.dim(2);
  g.out_f = x.dim(3);
  g.in_ch = w.dim(1);
  g.k_t = w.dim(2);
  g.k_f = w.dim(3);
  g.stride_t = spec.stride_t;
  g.stride_f = spec.stride_f;
  g.pad_t = spec.pad_t_lo;
  g.pad_f = spec.pad_f_lo;
  const auto extent = [](std::size_t n, std::size_t s, std::size_t k, std::size_t lo,
                         std::size_t hi, std::size_t op, const char* axis) {
    const std::ptrdiff_t e = static_cast<std::ptrdiff_t>((n - 1) * s + k + op) -
                             static_cast<std::ptrdiff_t>(lo + hi);
    if (n == 0 || e <= 0)
      throw ShapeError(std::string("conv_transpose2d: kernel ") + std::to_string(k) +
                       " larger than padded " + axis + " extent");
    return static_cast<std::size_t>(e);
  };
  g.in_t = extent(g.out_t, g.stride_t, g.k_t, spec.pad_t_lo, spec.pad_t_hi, spec.out_pad_t,
                  "time");
  g.in_f = extent(g.out_f, g.stride_f, g.k_f, spec.pad_f_lo, spec.pad_f_hi, spec.out_pad_f,
                  "frequency");
  Tensor<T> out({g.batch, g.in_ch, g.in_t, g.in_f});
  kernels::parallel::conv_backward_data(g, cspan(x.value()), cspan(w.value()), out.data());
  std::vector<Var<T>> inputs{x, w};
  if (bias) {
    if (bias->size() != g.in_ch) throw ShapeError("conv_transpose2d: bias size mismatch");
    add_bias(out, bias->value(), g.batch, g.in_ch, g.in_t * g.in_f);
    inputs.push_back(*bias);
  }
  return make_op<T>(std::move(out), std::move(inputs), "conv_transpose2d", [g](Node<T>& self) {
    if (wants_grad(self, 0)) {
      std::vector<T> gx(g.out_size());
      kernels::parallel::conv_forward(g, cspan(self.grad), cspan(self.parents[1]->value),
                                         gx);
      add_into(self.parents[0]->grad_buffer(), gx);
    }
    if (wants_grad(self, 1)) {
      std::vector<T> gw(g.weight_size());
      kernels::parallel::conv_backward_weight(g, cspan(self.grad),
                                                 cspan(self.parents[0]->value), gw);
      add_into(self.parents[1]->grad_buffer(), gw);
    }
    if (self.parents.size() > 2 && wants_grad(self, 2))
      bias_grad(self.grad, self.parents[2]->grad_buffer(), g.batch, g.in_ch, g.in_t * g.in_f);
  });
}

// ---- normalization --------------------------------------------------------------

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  BatchNormBuffers<T>& buffers, bool training, T momentum, T eps) {
  if (x.shape().size() < 2) throw ShapeError("batch_norm: input needs a channel axis");
  const std::size_t B = x.dim(0), C = x.dim(1), R = x.size() / (B * C);
  if (gamma.size() != C || beta.size() != C || buffers.running_mean.size() != C ||
      buffers.running_var.size() != C)
    throw ShapeError("batch_norm: parameter size mismatch for " + shape_str(x.shape()));
  const auto& xv = x.value();
  std::vector<T> mean(C), inv(C);
  const double n = static_cast<double>(B * R);
  for (std::size_t c = 0; c < C; ++c) {
    if (training) {
      double s = 0, s2 = 0;
      for (std::size_t b = 0; b < B; ++b) {
        const T* p = xv.ptr() + (b * C + c) * R;
        for (std::size_t r = 0; r < R; ++r) s += p[r];
      }
      const double m = s / n;
      for (std::size_t b = 0; b < B; ++b) {
        const T* p = xv.ptr() + (b * C + c) * R;
        for (std::size_t r = 0; r < R; ++r) s2 += (p[r] - m) * (p[r] - m);
      }
      const double v = s2 / n;
      mean[c] = static_cast<T>(m);
      inv[c] = static_cast<T>(1.0 / std::sqrt(v + eps));
      const double unbiased = n > 1 ? v * n / (n - 1) : v;
      buffers.running_mean[c] = (T{1} - momentum) * buffers.running_mean[c] + momentum * T(m);
      buffers.running_var[c] =
          (T{1} - momentum) * buffers.running_var[c] + momentum * T(unbiased);
    } else {
      mean[c] = buffers.running_mean[c];
      inv[c] = T{1} / std::sqrt(buffers.running_var[c] + eps);
    }
  }
  Tensor<T> out(xv.shape());
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const T* p = xv.ptr() + (b * C + c) * R;
      T* q = out.ptr() + (b * C + c) * R;
      for (std::size_t r = 0; r < R; ++r) q[r] = (p[r] - mean[c]) * inv[c] * gv[c] + bv[c];
    }
  return make_op<T>(
      std::move(out), {x, gamma, beta}, "batch_norm",
      [B, C, R, mean, inv, training](Node<T>& self) {
        const auto& xv = self.parents[0]->value;
        const auto& gv = self.parents[1]->value;
        const T n = static_cast<T>(B * R);
        for (std::size_t c = 0; c < C; ++c) {
          T sg = 0, sgx = 0;
          for (std::size_t b = 0; b < B; ++b) {
            const T* p = xv.ptr() + (b * C + c) * R;
            const T* g = self.grad.ptr() + (b * C + c) * R;
            for (std::size_t r = 0; r < R; ++r) {
              sg += g[r];
              sgx += g[r] * (p[r] - mean[c]) * inv[c];
            }
          }
          if (wants_grad(self, 1)) self.parents[1]->grad_buffer()[c] += sgx;
          if (wants_grad(self, 2)) self.parents[2]->grad_buffer()[c] += sg;
          if (!wants_grad(self, 0)) continue;
          auto& gx = self.parents[0]->grad_buffer();
          for (std::size_t b = 0; b < B; ++b) {
            const T* p = xv.ptr() + (b * C + c) * R;
            const T* g = self.grad.ptr() + (b * C + c) * R;
            T* d = gx.ptr() + (b * C + c) * R;
            for (std::size_t r = 0; r < R; ++r) {
              if (training) {
                const T xhat = (p[r] - mean[c]) * inv[c];
                d[r] += gv[c] * inv[c] * (g[r] - sg / n - xhat * sgx / n);
              } else {
                d[r] += g[r] * gv[c] * inv[c];
              }
            }
          }
        }
      });
}

template <typename T>
Var<T> instance_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, NormSpan span,
                     T eps) {
  check_rank4(x.shape(), "instance_norm input");
  const std::size_t B = x.dim(0), K = x.dim(1), TT = x.dim(2), F = x.dim(3);
  if (gamma.size() != K || beta.size() != K)
    throw ShapeError("instance_norm: affine parameters must have " + std::to_string(K) +
                     " entries");
  const auto& xv = x.value();
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  // Per (b, k, t): mean and reciprocal std used for frame t.
  std::vector<double> mean(B * K * TT), rstd(B * K * TT);
  Tensor<T> out(xv.shape());
  for (std::size_t bk = 0; bk < B * K; ++bk) {
    const T* p = xv.ptr() + bk * TT * F;
    double s1 = 0, s2 = 0;
    if (span == NormSpan::kUtterance) {
      for (std::size_t i = 0; i < TT * F; ++i) s1 += p[i];
      const double m = s1 / static_cast<double>(TT * F);
      for (std::size_t i = 0; i < TT * F; ++i) s2 += (p[i] - m) * (p[i] - m);
      const double r = 1.0 / std::sqrt(s2 / static_cast<double>(TT * F) + eps);
      for (std::size_t t = 0; t < TT; ++t) {
        mean[bk * TT + t] = m;
        rstd[bk * TT + t] = r;
      }
    } else {
      CausalNormStats stats;
      for (std::size_t t = 0; t < TT; ++t)
        std::tie(mean[bk * TT + t], rstd[bk * TT + t]) = stats.push(p + t * F, F, eps);
    }
    const std::size_t k = bk % K;
    T* q = out.ptr() + bk * TT * F;
    for (std::size_t t = 0; t < TT; ++t) {
      const double m = mean[bk * TT + t], r = rstd[bk * TT + t];
      for (std::size_t f = 0; f < F; ++f)
        q[t * F + f] = CausalNormStats::apply(p[t * F + f], m, r, gv[k], bv[k]);
    }
  }
  return make_op<T>(
      std::move(out), {x, gamma, beta}, "instance_norm",
      [B, K, TT, F, mean, rstd, span](Node<T>& self) {
        const auto& xv = self.parents[0]->value;
        const auto& gv = self.parents[1]->value;
        const bool gx_on = wants_grad(self, 0);
        T* gx = gx_on ? self.parents[0]->grad_buffer().ptr() : nullptr;
        std::vector<double> dxhat(TT * F), ds1(TT), ds2(TT);
        for (std::size_t bk = 0; bk < B * K; ++bk) {
          const std::size_t k = bk % K;
          const T* p = xv.ptr() + bk * TT * F;
          const T* g = self.grad.ptr() + bk * TT * F;
          double sg = 0, sgx = 0;
          for (std::size_t t = 0; t < TT; ++t) {
            const double m = mean[bk * TT + t], r = rstd[bk * TT + t];
            for (std::size_t f = 0; f < F; ++f) {
              const double xhat = (p[t * F + f] - m) * r;
              sg += g[t * F + f];
              sgx += g[t * F + f] * xhat;
              dxhat[t * F + f] = g[t * F + f] * static_cast<double>(gv[k]);
            }
          }
          if (wants_grad(self, 1)) self.parents[1]->grad_buffer()[k] += static_cast<T>(sgx);
          if (wants_grad(self, 2)) self.parents[2]->grad_buffer()[k] += static_cast<T>(sg);
          if (!gx_on) continue;
          T* d = gx + bk * TT * F;
          if (span == NormSpan::kUtterance) {
            const double n = static_cast<double>(TT * F), m = mean[bk * TT], r = rstd[bk * TT];
            double a = 0, bsum = 0;
            for (std::size_t i = 0; i < TT * F; ++i) {
              a += dxhat[i];
              bsum += dxhat[i] * (p[i] - m) * r;
            }
            for (std::size_t i = 0; i < TT * F; ++i) {
              const double xhat = (p[i] - m) * r;
              d[i] += static_cast<T>(r * (dxhat[i] - a / n - xhat * bsum / n));
            }
            continue;
          }
          // Frame t's statistics come from the running sums S1_t, S2_t.
          for (std::size_t t = 0; t < TT; ++t) {
            const double m = mean[bk * TT + t], r = rstd[bk * TT + t];
            const double cnt = static_cast<double>((t + 1) * F);
            double a = 0, bsum = 0;
            for (std::size_t f = 0; f < F; ++f) {
              a += dxhat[t * F + f];
              bsum += dxhat[t * F + f] * (p[t * F + f] - m);
            }
            const double dv = bsum * -0.5 * r * r * r;
            const double dm = -r * a + dv * -2.0 * m;
            ds1[t] = dm / cnt;
            ds2[t] = dv / cnt;
          }
          double acc1 = 0, acc2 = 0;
          for (std::size_t t = TT; t-- > 0;) {
            acc1 += ds1[t];
            acc2 += ds2[t];
            const double r = rstd[bk * TT + t];
            for (std::size_t f = 0; f < F; ++f)
              d[t * F + f] += static_cast<T>(dxhat[t * F + f] * r + acc1 +
                                             2.0 * p[t * F + f] * acc2);
          }
        }
      });
}

// ---- recurrent ----------------------------------------------------------------------

template <typename T>
Var<T> lstm(const Var<T>& x, const Var<T>& wx, const Var<T>& wh, const Var<T>& bias,
            bool reverse) {
  if (x.shape().size() != 3) throw ShapeError("lstm: input must be [N, S, I]");
  const std::size_t N = x.dim(0), S = x.dim(1), I = x.dim(2);
  if (wh.shape().size() != 2 || wh.dim(1) != 4 * wh.dim(0))
    throw ShapeError("lstm: recurrent weight must be [H, 4H], got " + shape_str(wh.shape()));
  const std::size_t H = wh.dim(0);
  if (wx.shape() != Shape{I, 4 * H} || bias.size() != 4 * H)
    throw ShapeError("lstm: input weight " + shape_str(wx.shape()) + " / bias " +
                     shape_str(bias.shape()) + " inconsistent with input " +
                     shape_str(x.shape()));
  kernels::LstmDims d{N, S, I, H, reverse};
  Tensor<T> h({N, S, H});
  auto c = std::make_shared<std::vector<T>>(N * S * H);
  auto gates = std::make_shared<std::vector<T>>(N * S * 4 * H);
  kernels::parallel::lstm_forward(d, cspan(x.value()), cspan(wx.value()), cspan(wh.value()),
                                     cspan(bias.value()), {}, {}, h.data(), *c, *gates);
  return make_op<T>(std::move(h), {x, wx, wh, bias}, "lstm", [d, c, gates](Node<T>& self) {
    const std::size_t G = 4 * d.hidden;
    std::vector<T> dx(d.batch * d.steps * d.input), dwx(d.input * G), dwh(d.hidden * G), db(G);
    kernels::parallel::lstm_backward(
        d, cspan(self.parents[0]->value), cspan(self.parents[1]->value),
        cspan(self.parents[2]->value), {}, {}, cspan(self.value), *c, *gates, cspan(self.grad),
        dx, dwx, dwh, db);
    if (wants_grad(self, 0)) add_into(self.parents[0]->grad_buffer(), dx);
    if (wants_grad(self, 1)) add_into(self.parents[1]->grad_buffer(), dwx);
    if (wants_grad(self, 2)) add_into(self.parents[2]->grad_buffer(), dwh);
    if (wants_grad(self, 3)) add_into(self.parents[3]->grad_buffer(), db);
  });
}

// ---- filtering ------------------------------------------------------------------------

template <typename T>
Var<T> tap_filter(const Var<T>& m, const Var<T>& y, std::size_t taps_t, std::size_t taps_f) {
  check_rank4(m.shape(), "tap_filter mask");
  check_rank4(y.shape(), "tap_filter input");
  const std::size_t B = y.dim(0), K = y.dim(1), TT = y.dim(2), F = y.dim(3);
  const std::size_t taps = taps_t * taps_f;
  if (taps == 0 || m.shape() != Shape{B, K * taps, TT, F})
    throw ShapeError("tap_filter: mask " + shape_str(m.shape()) + " does not match input " +
                     shape_str(y.shape()) + " with " + std::to_string(taps) + " taps");
  const std::ptrdiff_t centre = static_cast<std::ptrdiff_t>(taps_f / 2);
  // Visits (mask index, input index, output index) for every in-range tap.
  auto visit = [=](auto&& fn) {
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t i = 0; i < taps_t; ++i)
          for (std::size_t j = 0; j < taps_f; ++j) {
            const std::size_t mc = (b * K + k) * taps + i * taps_f + j;
            for (std::size_t t = i; t < TT; ++t)
              for (std::size_t f = 0; f < F; ++f) {
                const std::ptrdiff_t src =
                    static_cast<std::ptrdiff_t>(f) - centre + static_cast<std::ptrdiff_t>(j);
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(F)) continue;
                fn((mc * TT + t) * F + f, ((b * K + k) * TT + (t - i)) * F + src,
                   ((b * K + k) * TT + t) * F + f);
              }
          }
  };
  Tensor<T> out(y.shape());
  const auto& mv = m.value();
  const auto& yv = y.value();
  visit([&](std::size_t mi, std::size_t yi, std::size_t oi) { out[oi] += mv[mi] * yv[yi]; });
  return make_op<T>(std::move(out), {m, y}, "tap_filter", [visit](Node<T>& self) {
    const auto& mv = self.parents[0]->value;
    const auto& yv = self.parents[1]->value;
    const bool gm = wants_grad(self, 0), gy = wants_grad(self, 1);
    T* dm = gm ? self.parents[0]->grad_buffer().ptr() : nullptr;
    T* dy = gy ? self.parents[1]->grad_buffer().ptr() : nullptr;
    visit([&](std::size_t mi, std::size_t yi, std::size_t oi) {
      if (gm) dm[mi] += self.grad[oi] * yv[yi];
      if (gy) dy[yi] += self.grad[oi] * mv[mi];
    });
  });
}

// ---- instantiation --------------------------------------------------------------------

#define DCCRN_INSTANTIATE(T)                                                                 \
  template struct Node<T>;                                                                   \
  template class Var<T>;                                                                     \
  template Var<T> make_op<T>(Tensor<T>, std::vector<Var<T>>, const char*,                    \
                             std::function<void(Node<T>&)>);                                 \
  template std::vector<Node<T>*> topo_order<T>(const Var<T>&);                               \
  template void backward<T>(const Var<T>&);                                                  \
  template void backward<T>(const Var<T>&, const Tensor<T>&);                                \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                      \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                      \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                      \
  template Var<T> div<T>(const Var<T>&, const Var<T>&, T);                                   \
  template Var<T> neg<T>(const Var<T>&);                                                     \
  template Var<T> add_scalar<T>(const Var<T>&, T);                                           \
  template Var<T> mul_scalar<T>(const Var<T>&, T);                                           \
  template Var<T> square<T>(const Var<T>&);                                                  \
  template Var<T> exp<T>(const Var<T>&);                                                     \
  template Var<T> log<T>(const Var<T>&);                                                     \
  template Var<T> erf<T>(const Var<T>&);                                                     \
  template Var<T> sigmoid<T>(const Var<T>&);                                                 \
  template Var<T> tanh<T>(const Var<T>&);                                                    \
  template Var<T> prelu<T>(const Var<T>&, const Var<T>&);                                    \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                          \
  template Var<T> permute<T>(const Var<T>&, const std::vector<std::size_t>&);                \
  template Var<T> concat<T>(const std::vector<Var<T>>&, std::size_t);                        \
  template Var<T> slice<T>(const Var<T>&, std::size_t, std::size_t, std::size_t);            \
  template Var<T> sum<T>(const Var<T>&);                                                     \
  template Var<T> sum<T>(const Var<T>&, std::size_t);                                        \
  template Var<T> mean<T>(const Var<T>&);                                                    \
  template Var<T> mean<T>(const Var<T>&, std::size_t);                                       \
  template Var<T> var<T>(const Var<T>&);                                                     \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                                   \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>*, const Conv2dSpec&); \
  template Var<T> conv_transpose2d<T>(const Var<T>&, const Var<T>&, const Var<T>*,           \
                                      const Conv2dSpec&);                                    \
  template Var<T> batch_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&,                 \
                                BatchNormBuffers<T>&, bool, T, T);                           \
  template Var<T> instance_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, NormSpan, T); \
  template Var<T> lstm<T>(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&, bool); \
  template Var<T> tap_filter<T>(const Var<T>&, const Var<T>&, std::size_t, std::size_t);

DCCRN_INSTANTIATE(float)
DCCRN_INSTANTIATE(double)

}  // namespace dccrn::ad
