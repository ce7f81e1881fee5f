// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Acceptance runner: one PASS/FAIL line per criterion, exit status 0 only
// when every criterion passes.

#include <CLI11.hpp>
#include <cstdio>
#include <string>
#include <vector>

#include "dccrn/verify.hpp"

using dccrn::verify::CheckResult;
using dccrn::verify::timed;

namespace {

// Adds a wall-clock budget on top of the check's own criterion.
CheckResult with_budget(CheckResult r, double budget_s) {
  if (r.seconds >= budget_s) {
    r.passed = false;
    r.detail += "; exceeded the " + std::to_string(static_cast<int>(budget_s)) + " s budget";
  }
  return r;
}

void print(const CheckResult& r) {
  std::printf("%s  %-32s value %-11.4g tol %-9.3g %8.1fs  %s\n", r.passed ? "PASS" : "FAIL",
              r.name.c_str(), r.value, r.tolerance, r.seconds, r.detail.c_str());
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria", "dccrn_acceptance"};
  std::size_t overfit_steps = 500, general_steps = 1000;
  double stream_seconds = 10.0, bench_seconds = 10.0;
  bool print_report = false;
  app.add_option("--overfit-steps", overfit_steps)->check(CLI::Range(1, 2000))->capture_default_str();
  app.add_option("--general-steps", general_steps)->capture_default_str();
  app.add_option("--stream-seconds", stream_seconds)->capture_default_str();
  app.add_option("--bench-seconds", bench_seconds)->capture_default_str();
  app.add_flag("--report", print_report, "Print the full RTF table");
  CLI11_PARSE(app, argc, argv);

  using namespace dccrn;
  std::vector<CheckResult> all;
  auto run = [&](CheckResult r) {
    print(r);
    all.push_back(std::move(r));
  };
  run(with_budget(timed(verify::gradient_suite), 300.0));
  run(timed(verify::complex_equivalence));
  run(timed(verify::stft_round_trip));
  run(timed(verify::subband_identity));
  run(timed(verify::causality_latency));
  run(timed([&] {
    Model<float> full(ModelConfig::full());
    return verify::streaming_equivalence(full, stream_seconds);
  }));
  run(timed(verify::snr_labels));
  run(timed(verify::mmse_lsa));
  run(with_budget(timed([&] { return verify::toy_overfit(overfit_steps, overfit_steps / 10); }),
                  1800.0));
  run(timed([&] { return verify::generalization(general_steps); }));
  std::string report;
  run(timed([&] { return verify::bench_accounting(bench_seconds, &report); }));
  run(timed(verify::param_count));
  if (print_report) std::fputs(report.c_str(), stdout);

  std::size_t passed = 0;
  for (const auto& r : all) passed += r.passed;
  std::printf("%zu/%zu criteria passed\n", passed, all.size());
  return passed == all.size() ? 0 : 1;
}
