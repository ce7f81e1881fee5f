// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <map>
#include <string>
#include <vector>

#include "dccrn/autodiff.hpp"

namespace dccrn {

// Ordered, named collection of trainable leaves plus non-trainable buffers
// (batch-norm running statistics). Names are unique.
template <typename T>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    ad::Var<T> var;
  };

  ad::Var<T> add(const std::string& name, Tensor<T> value);
  ad::BatchNormBuffers<T>& add_batch_norm_buffers(const std::string& name, std::size_t channels);

  ad::Var<T>& get(const std::string& name);
  const ad::Var<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::map<std::string, ad::BatchNormBuffers<T>>& buffers() { return buffers_; }
  const std::map<std::string, ad::BatchNormBuffers<T>>& buffers() const { return buffers_; }

  // Trainable scalar count.
  std::size_t count_scalars() const;
  void zero_grad();

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, ad::BatchNormBuffers<T>> buffers_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment estimates are keyed by parameter name.
template <typename T>
class Adam {
 public:
  struct Moments {
    Tensor<T> m;
    Tensor<T> v;
  };

  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // Applies one update to every parameter that holds a gradient. A non-finite
  // gradient aborts the whole step before anything changes and throws
  // NumericError naming the parameter.
  void step(ParameterSet<T>& params);

  double lr() const { return config_.lr; }
  void set_lr(double lr) { config_.lr = lr; }
  const AdamConfig& config() const { return config_; }
  std::size_t steps() const { return steps_; }
  void set_steps(std::size_t s) { steps_ = s; }
  std::map<std::string, Moments>& moments() { return moments_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }

 private:
  AdamConfig config_;
  std::size_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

// Rescales gradients so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
template <typename T>
double clip_grad_norm(ParameterSet<T>& params, double max_norm);

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;
extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace dccrn
