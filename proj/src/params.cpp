// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dccrn/params.hpp"

#include <cmath>

namespace dccrn {

template <typename T>
ad::Var<T> ParameterSet<T>::add(const std::string& name, Tensor<T> value) {
  if (index_.count(name)) throw StateError("duplicate parameter name " + name);
  index_[name] = entries_.size();
  entries_.push_back({name, ad::Var<T>(std::move(value), true)});
  return entries_.back().var;
}

template <typename T>
ad::BatchNormBuffers<T>& ParameterSet<T>::add_batch_norm_buffers(const std::string& name,
                                                                 std::size_t channels) {
  auto [it, inserted] = buffers_.emplace(
      name, ad::BatchNormBuffers<T>{Tensor<T>({channels}, T{0}), Tensor<T>({channels}, T{1})});
  if (!inserted) throw StateError("duplicate buffer name " + name);
  return it->second;
}

template <typename T>
ad::Var<T>& ParameterSet<T>::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw StateError("unknown parameter " + name);
  return entries_[it->second].var;
}

template <typename T>
const ad::Var<T>& ParameterSet<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw StateError("unknown parameter " + name);
  return entries_[it->second].var;
}

template <typename T>
std::size_t ParameterSet<T>::count_scalars() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.var.size();
  return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

template <typename T>
void Adam<T>::step(ParameterSet<T>& params) {
  for (const auto& e : params.entries()) {
    if (!e.var.has_grad()) continue;
    for (T g : e.var.grad().data())
      if (!std::isfinite(g))
        throw NumericError("non-finite gradient in parameter " + e.name + "; step aborted");
  }
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (auto& e : params.entries()) {
    if (!e.var.has_grad()) continue;
    auto& mom = moments_[e.name];
    if (mom.m.empty()) {
      mom.m = Tensor<T>(e.var.shape());
      mom.v = Tensor<T>(e.var.shape());
    }
    auto& w = e.var.mutable_value();
    const auto& g = e.var.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double m = b1 * mom.m[i] + (1.0 - b1) * gi;
      const double v = b2 * mom.v[i] + (1.0 - b2) * gi * gi;
      mom.m[i] = static_cast<T>(m);
      mom.v[i] = static_cast<T>(v);
      const double mhat = m / c1, vhat = v / c2;
      w[i] = static_cast<T>(w[i] - config_.lr * mhat / (std::sqrt(vhat) + config_.eps));
    }
  }
}

template <typename T>
double clip_grad_norm(ParameterSet<T>& params, double max_norm) {
  double sq = 0;
  for (const auto& e : params.entries())
    if (e.var.has_grad())
      for (T g : e.var.grad().data()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const T scale = static_cast<T>(max_norm / norm);
    for (auto& e : params.entries())
      if (e.var.has_grad())
        for (T& g : e.var.mutable_grad().data()) g *= scale;
  }
  return norm;
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class Adam<float>;
template class Adam<double>;
template double clip_grad_norm<float>(ParameterSet<float>&, double);
template double clip_grad_norm<double>(ParameterSet<double>&, double);

}  // namespace dccrn
