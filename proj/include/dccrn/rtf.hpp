// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Single-threaded real-time-factor measurement with a per-stage breakdown.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dccrn/model.hpp"

namespace dccrn::rtf {

inline constexpr double kPaperRtf = 0.250;

struct RtfOptions {
  double seconds = 10.0;  // audio duration per run
  std::size_t runs = 5;   // timed runs after one warm-up
  int threads = 1;
  bool postproc = true;
  std::uint64_t seed = 1;
};

struct RtfReport {
  double audio_seconds = 0;
  std::size_t runs = 0;
  int threads = 1;
  std::size_t params = 0;
  StageTimes median;           // breakdown of the run with the median total
  std::vector<double> totals;  // every timed run
  double rtf() const { return median.total / audio_seconds; }
  // |sum of stages - total| / total for the median run.
  double accounting_gap() const;
};

// Times STFT, forward, post-filter and iSTFT of a noise clip. The OpenMP
// thread count is set for the duration of the call and restored afterwards.
RtfReport measure(Model<float>& model, const RtfOptions& opt);

// Human-readable table, one stage per line, ending with the RTF next to the
// published single-thread reference.
std::string format(const RtfReport& r);

}  // namespace dccrn::rtf
