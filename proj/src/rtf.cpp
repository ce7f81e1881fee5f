// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dccrn/rtf.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "dccrn/kernels.hpp"
#include "dccrn/postproc.hpp"

namespace dccrn::rtf {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

StageTimes run_once(Model<float>& model, const std::vector<float>& x, bool postproc) {
  const auto& fc = model.config().frame;
  StageTimes st;
  const auto start = Clock::now();
  auto t0 = start;
  const auto spec = dsp::stft<float>(x, fc);
  const auto batch = as_batch(spec);
  st.stft += since(t0);
  ModelOutput<float> out;
  {
    ad::NoGradGuard ng;
    out = model.forward(batch, false, &st);
  }
  t0 = Clock::now();
  auto y = from_batch(out.enhanced);
  st.stft += since(t0);
  if (postproc) {
    t0 = Clock::now();
    y = postproc::apply_postproc(y, spec);
    st.postproc += since(t0);
  }
  t0 = Clock::now();
  const auto wave = dsp::istft(y, fc);
  st.stft += since(t0);
  st.total = since(start);
  return st;
}

}  // namespace

double RtfReport::accounting_gap() const {
  return median.total > 0 ? std::abs(median.sum() - median.total) / median.total : 0.0;
}

RtfReport measure(Model<float>& model, const RtfOptions& opt) {
  if (opt.seconds <= 0 || opt.runs == 0) throw ShapeError("rtf: seconds and runs must be positive");
  const int saved = kernels::parallel::num_threads();
  kernels::parallel::set_num_threads(opt.threads);

  const auto& fc = model.config().frame;
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<float> g(0.0f, 0.1f);
  std::vector<float> x(static_cast<std::size_t>(opt.seconds * fc.sample_rate));
  for (float& v : x) v = g(rng);

  run_once(model, x, opt.postproc);
  std::vector<StageTimes> runs;
  for (std::size_t i = 0; i < opt.runs; ++i) runs.push_back(run_once(model, x, opt.postproc));
  kernels::parallel::set_num_threads(saved);

  RtfReport r;
  r.audio_seconds = static_cast<double>(x.size()) / fc.sample_rate;
  r.runs = runs.size();
  r.threads = opt.threads;
  r.params = model.count_params();
  for (const auto& s : runs) r.totals.push_back(s.total);
  auto order = runs;
  std::nth_element(order.begin(), order.begin() + order.size() / 2, order.end(),
                   [](const StageTimes& a, const StageTimes& b) { return a.total < b.total; });
  r.median = order[order.size() / 2];
  return r;
}

std::string format(const RtfReport& r) {
  const auto& m = r.median;
  std::string s = fmt::format("audio {:.2f} s, {} runs (median), {} thread(s), {} parameters\n",
                              r.audio_seconds, r.runs, r.threads, r.params);
  auto line = [&](const char* name, double v) {
    s += fmt::format("  {:<10} {:9.4f} s  {:5.1f}%\n", name, v, 100.0 * v / m.total);
  };
  line("stft", m.stft);
  line("subband", m.subband);
  line("encoder", m.encoder);
  line("tf_lstm", m.tf_lstm);
  line("snr_head", m.snr_head);
  line("decoder", m.decoder);
  line("postproc", m.postproc);
  line("sum", m.sum());
  line("total", m.total);
  s += fmt::format("stage sum vs total: {:.2f}%\n", 100.0 * r.accounting_gap());
  s += fmt::format("RTF {:.3f} (published single-thread reference {:.3f})\n", r.rtf(), kPaperRtf);
  return s;
}

}  // namespace dccrn::rtf
