// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dccrn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace dccrn {

template <typename T>
Tensor<T> random_tensor(const Shape& shape, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

template Tensor<float> random_tensor<float>(const Shape&, std::uint64_t, double, double);
template Tensor<double> random_tensor<double>(const Shape&, std::uint64_t, double, double);

GradCheckResult grad_check(
    const std::function<ad::Var<double>(const std::vector<ad::Var<double>>&)>& f,
    const std::vector<Tensor<double>>& inputs, double h, std::size_t max_probes,
    std::uint64_t seed, double floor) {
  using ad::Var;
  auto eval = [&](const std::vector<Tensor<double>>& xs, bool grads,
                  std::vector<Var<double>>* leaves) {
    std::vector<Var<double>> vars;
    for (const auto& x : xs) vars.emplace_back(x, grads);
    auto out = f(vars);
    if (leaves) *leaves = vars;
    return out;
  };

  std::vector<Var<double>> leaves;
  auto out = eval(inputs, true, &leaves);
  const Tensor<double> proj = random_tensor<double>(out.shape(), seed ^ 0x9e3779b97f4a7c15ULL);
  ad::backward(out, proj);

  auto objective = [&](const std::vector<Tensor<double>>& xs) {
    ad::NoGradGuard guard;
    auto o = eval(xs, false, nullptr);
    double s = 0;
    for (std::size_t i = 0; i < o.size(); ++i) s += o.value()[i] * proj[i];
    return s;
  };

  GradCheckResult result;
  std::mt19937_64 rng(seed);
  auto work = inputs;
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    const auto& analytic_full = leaves[n].has_grad() ? leaves[n].grad()
                                                     : Tensor<double>(inputs[n].shape());
    std::vector<std::size_t> coords(inputs[n].size());
    std::iota(coords.begin(), coords.end(), 0);
    if (max_probes > 0 && coords.size() > max_probes) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_probes);
    }
    double diff2 = 0, a2 = 0, n2 = 0;
    for (std::size_t c : coords) {
      const double x0 = work[n][c];
      work[n][c] = x0 + h;
      const double fp = objective(work);
      work[n][c] = x0 - h;
      const double fm = objective(work);
      work[n][c] = x0;
      result.evaluations += 2;
      const double num = (fp - fm) / (2 * h);
      const double ana = analytic_full[c];
      diff2 += (num - ana) * (num - ana);
      a2 += ana * ana;
      n2 += num * num;
    }
    const double rel = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), floor});
    if (rel > result.max_rel_err || n == 0) {
      result.max_rel_err = rel;
      result.worst_input = n;
    }
  }
  return result;
}

}  // namespace dccrn
