// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Central finite-difference gradient checking in double precision.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dccrn/autodiff.hpp"

namespace dccrn {

struct GradCheckResult {
  double max_rel_err = 0;  // worst input tensor
  std::size_t worst_input = 0;
  std::size_t evaluations = 0;
};

// Compares analytic gradients of sum(f(inputs) * R), R a fixed random
// projection, against central differences with step h. The error of each
// input is ||analytic - numeric|| / max(||analytic||, ||numeric||, floor).
// When max_probes > 0 only that many randomly chosen coordinates per input
// are perturbed.
GradCheckResult grad_check(
    const std::function<ad::Var<double>(const std::vector<ad::Var<double>>&)>& f,
    const std::vector<Tensor<double>>& inputs, double h = 1e-5, std::size_t max_probes = 0,
    std::uint64_t seed = 7, double floor = 1e-8);

// Uniform random tensor in [lo, hi).
template <typename T>
Tensor<T> random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0,
                        double hi = 1.0);

}  // namespace dccrn
