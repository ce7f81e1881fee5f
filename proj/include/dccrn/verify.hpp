// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Self-contained oracle and property checks shared by `dccrn verify` and the
// acceptance runner. Each check compares the implementation against an
// independent reference and reports its worst error next to the tolerance.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dccrn/model.hpp"

namespace dccrn::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0;      // measured quantity (usually the worst error)
  double tolerance = 0;  // pass threshold for value
  std::string detail;
  double seconds = 0;
};

// Finite differences against every differentiable op and the tiny model,
// in double precision; worst relative error < 1e-4.
CheckResult gradient_suite();
// Complex conv, transposed conv, projection and LSTM against explicit
// complex-arithmetic loops; relative error < 1e-5.
CheckResult complex_equivalence();
// Analysis then synthesis of unit-scale noise; interior error < 1e-5.
CheckResult stft_round_trip();
// Identity filters give merge(split(Y)) == Y within 1e-6, and random filters
// match direct summation.
CheckResult subband_identity();
// Perturbing input frame t changes output frames >= t - 1 only; the
// streaming engine reports 40 ms of algorithmic latency.
CheckResult causality_latency();
// Frame-by-frame output against the offline forward on `seconds` of audio;
// max abs error < 1e-5.
CheckResult streaming_equivalence(Model<float>& model, double seconds);
// Label range and monotonicity, default constants, moving-average recursion.
CheckResult snr_labels();
// E1 against quadrature, gain range and the xi' = 1, gamma = 2 value, reset
// schedule on scripted sequences.
CheckResult mmse_lsa();
// Full-config parameter count within 15% of 3.3M.
CheckResult param_count();

// Trains the toy model on 5 fixed synthetic 1 s pairs (the whole set is one
// batch) for `steps` steps. Passes when the output SI-SNR on those pairs
// exceeds 10 dB and the means of consecutive `window`-step blocks of the
// training loss strictly decrease.
CheckResult toy_overfit(std::size_t steps = 500, std::size_t window = 50);
// Trains the toy model with the desk-scale schedule on synthetic pools, then
// scores 5 held-out mixtures drawn with a different synthesis seed. Value is
// the mean SI-SNR improvement over the noisy input; passes at >= 3 dB.
CheckResult generalization(std::size_t steps = 1000);
// Single-threaded RTF of the full config; passes when the stage breakdown
// sums to the total within 5%. The report text goes to `report`.
CheckResult bench_accounting(double seconds, std::string* report = nullptr);

// The fast checks above, with streaming equivalence on a short clip of the
// toy model.
std::vector<CheckResult> quick_suite();

// Times fn and fills CheckResult::seconds.
CheckResult timed(const std::function<CheckResult()>& fn);

}  // namespace dccrn::verify
