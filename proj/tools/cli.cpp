// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cli.hpp"

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>

#include "dccrn/checkpoint.hpp"
#include "dccrn/postproc.hpp"
#include "dccrn/rtf.hpp"
#include "dccrn/stream.hpp"
#include "dccrn/trainer.hpp"
#include "dccrn/verify.hpp"

namespace dccrn::cli {

namespace {

struct UsageError : Error {
  using Error::Error;
};

void setup_logging() {
  static std::shared_ptr<spdlog::logger> logger = [] {
    auto l = spdlog::stderr_color_mt("dccrn");
    l->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    return l;
  }();
  spdlog::set_default_logger(logger);
  spdlog::level::level_enum level = spdlog::level::info;
  if (const char* env = std::getenv("DCCRN_LOG_LEVEL")) {
    level = spdlog::level::from_str(env);
    // from_str maps unknown names to off.
    if (level == spdlog::level::off && std::string(env) != "off") level = spdlog::level::info;
  }
  spdlog::set_level(level);
}

ModelConfig named_config(const std::string& name) {
  if (name == "full") return ModelConfig::full();
  if (name == "toy") return ModelConfig::toy();
  if (name == "tiny") return ModelConfig::tiny();
  throw UsageError("unknown model config '" + name + "' (full, toy, tiny)");
}

std::unique_ptr<Model<float>> load_model(const std::string& path) {
  if (!std::filesystem::exists(path)) throw DataError("checkpoint not found: " + path);
  return import_model<float>(read_checkpoint(path));
}

void check_config(const Model<float>& m, const std::string& expect) {
  if (expect.empty()) return;
  // The initialisation seed does not change the architecture.
  auto want = named_config(expect);
  want.seed = m.config().seed;
  if (!(m.config() == want))
    throw DataError("checkpoint config does not match --config " + expect);
}

// ---- enhance ----------------------------------------------------------------------

struct EnhanceArgs {
  std::string in, out, checkpoint, config;
  bool stream = false;
  bool no_postproc = false;
};

int enhance(const EnhanceArgs& a) {
  if (!std::filesystem::exists(a.in)) throw DataError("input not found: " + a.in);
  auto model = load_model(a.checkpoint);
  check_config(*model, a.config);
  const auto& fc = model->config().frame;
  const auto wav = dsp::wav_read(a.in);
  if (wav.sample_rate != fc.sample_rate)
    throw DataError(fmt::format("input is {} Hz, model expects {} Hz", wav.sample_rate,
                                fc.sample_rate));
  const bool pp = !a.no_postproc;
  dsp::Waveform out{{}, wav.sample_rate};
  if (wav.samples.empty()) {
    spdlog::warn("input is empty");
  } else if (a.stream) {
    StreamingEnhancer<float> se(*model, pp);
    const std::span<const float> x(wav.samples);
    for (std::size_t pos = 0; pos < x.size(); pos += fc.hop) {
      const auto part = se.push(x.subspan(pos, std::min(fc.hop, x.size() - pos)));
      out.samples.insert(out.samples.end(), part.begin(), part.end());
    }
    const auto tail = se.finish();
    out.samples.insert(out.samples.end(), tail.begin(), tail.end());
    spdlog::info("streaming latency {} samples ({} ms)", se.measured_latency_samples(),
                 se.measured_latency_ms());
    std::printf("latency_ms=%g\n", se.measured_latency_ms());
  } else {
    const auto spec = dsp::stft<float>(wav.samples, fc);
    dsp::ComplexSpectrogram<float> y;
    {
      ad::NoGradGuard ng;
      y = from_batch(model->forward(as_batch(spec), false).enhanced);
    }
    if (pp) y = postproc::apply_postproc(y, spec);
    out.samples = dsp::istft(y, fc);
  }
  out.samples.resize(wav.samples.size(), 0.0f);
  for (float v : out.samples)
    if (!std::isfinite(v)) throw NumericError("enhanced signal is not finite");
  dsp::wav_write(a.out, out);
  spdlog::info("wrote {} ({:.2f} s)", a.out, out.duration());
  return kOk;
}

// ---- train-toy --------------------------------------------------------------------

struct TrainArgs {
  std::string out, manifest, resume, config = "toy", log;
  std::vector<std::string> set;
  std::size_t steps = 0;
  std::size_t pool_speech = 40, pool_noise = 40, pool_rir = 20;
  double pool_seconds = 4.0;
};

std::map<std::string, std::string> header_section(const Checkpoint& ck, const std::string& prefix) {
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : ck.header)
    if (k.rfind(prefix, 0) == 0) kv[k.substr(prefix.size())] = v;
  return kv;
}

// Synthetic pools are rebuilt from these keys on resume.
std::map<std::string, std::string> data_header(const TrainArgs& a, std::uint64_t seed) {
  if (!a.manifest.empty())
    return {{"data.manifest", std::filesystem::absolute(a.manifest).string()}};
  return {{"data.speech", std::to_string(a.pool_speech)},
          {"data.noise", std::to_string(a.pool_noise)},
          {"data.rir", std::to_string(a.pool_rir)},
          {"data.seconds", exact_double(a.pool_seconds)},
          {"data.seed", std::to_string(seed)}};
}

TrainArgs stored_data(const Checkpoint& ck, TrainArgs a, std::uint64_t& seed) {
  const auto d = header_section(ck, "data.");
  if (!a.manifest.empty()) return a;
  if (d.count("manifest")) {
    a.manifest = d.at("manifest");
    return a;
  }
  try {
    a.pool_speech = std::stoull(ck.at("data.speech"));
    a.pool_noise = std::stoull(ck.at("data.noise"));
    a.pool_rir = std::stoull(ck.at("data.rir"));
    a.pool_seconds = parse_double(ck.at("data.seconds"));
    seed = std::stoull(ck.at("data.seed"));
  } catch (const std::logic_error&) {
    throw DataError("checkpoint has malformed data.* entries");
  }
  return a;
}

int train_toy(TrainArgs a, std::uint64_t seed, bool seed_given) {
  std::unique_ptr<Model<float>> model;
  train::TrainConfig cfg;
  std::uint64_t data_seed = seed;
  if (!a.resume.empty()) {
    if (!std::filesystem::exists(a.resume)) throw DataError("checkpoint not found: " + a.resume);
    const auto ck = read_checkpoint(a.resume);
    model = import_model<float>(ck);
    cfg = train::TrainConfig::from_map(header_section(ck, "train."));
    a = stored_data(ck, a, data_seed);
    if (!a.set.empty() || seed_given)
      spdlog::warn("--set and --seed are ignored when resuming; the stored config is used");
  } else {
    auto mc = named_config(a.config);
    mc.seed = seed;
    model = std::make_unique<Model<float>>(mc);
    auto kv = train::TrainConfig::toy().to_map();
    kv["seed"] = std::to_string(seed);
    for (const auto& s : a.set) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value: " + s);
      kv[s.substr(0, eq)] = s.substr(eq + 1);
    }
    cfg = train::TrainConfig::from_map(kv);
  }
  if (a.steps) cfg.steps = a.steps;
  cfg.validate();

  train::Pools pools;
  if (!a.manifest.empty()) {
    if (!std::filesystem::exists(a.manifest)) throw DataError("manifest not found: " + a.manifest);
    pools = train::load_manifest(a.manifest);
  } else {
    pools = train::synth::pools(a.pool_speech, a.pool_noise, a.pool_rir, a.pool_seconds,
                                model->config().frame.sample_rate, data_seed);
  }
  spdlog::info("model {} parameters; pools {} speech, {} noise, {} rir", model->count_params(),
               pools.speech.size(), pools.noise.size(), pools.rir.size());

  train::Trainer<float> trainer(*model, cfg, pools);
  if (!a.resume.empty()) {
    trainer.load(a.resume);
    spdlog::info("resumed at step {}", trainer.step_count());
  }

  std::FILE* log = stdout;
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> owned(nullptr, std::fclose);
  if (!a.log.empty()) {
    owned.reset(std::fopen(a.log.c_str(), a.resume.empty() ? "w" : "a"));
    if (!owned) throw DataError("cannot open metrics log " + a.log);
    log = owned.get();
  }
  try {
    trainer.run(
        cfg.steps,
        [&](const train::StepMetrics& m) {
          std::fprintf(log, "step=%zu L_SI-SNR=%.9g L_SNR=%.9g loss=%.9g lr=%.9g grad_norm=%.9g\n",
                       m.step, m.si_snr, m.snr, m.loss, m.lr, m.grad_norm);
          std::fflush(log);
        },
        [&](std::size_t step, double v) {
          std::fprintf(log, "validate step=%zu val_loss=%.9g lr=%.9g\n", step, v, trainer.lr());
          std::fflush(log);
          spdlog::info("step {}: validation loss {:.4f}, lr {:g}", step, v, trainer.lr());
        });
  } catch (const NumericError&) {
    spdlog::error("training diverged at step {}; no checkpoint written", trainer.step_count() + 1);
    throw;
  }
  trainer.save(a.out, data_header(a, data_seed));
  spdlog::info("wrote {} at step {}", a.out, trainer.step_count());
  return kOk;
}

// ---- bench ------------------------------------------------------------------------

struct BenchArgs {
  std::string checkpoint, config = "full";
  double duration = 10.0;
  std::size_t runs = 5;
  int threads = 1;
  bool no_postproc = false;
};

int bench(const BenchArgs& a, std::uint64_t seed) {
  std::unique_ptr<Model<float>> model;
  if (!a.checkpoint.empty()) {
    model = load_model(a.checkpoint);
  } else {
    auto mc = named_config(a.config);
    mc.seed = seed;
    model = std::make_unique<Model<float>>(mc);
  }
  if (a.runs < 5) spdlog::warn("fewer than 5 timed runs; the median is less stable");
  rtf::RtfOptions opt;
  opt.seconds = a.duration;
  opt.runs = a.runs;
  opt.threads = a.threads;
  opt.postproc = !a.no_postproc;
  opt.seed = seed;
  const auto r = rtf::measure(*model, opt);
  std::fputs(rtf::format(r).c_str(), stdout);
  return kOk;
}

// ---- verify -----------------------------------------------------------------------

int verify_cmd(bool full) {
  auto results = verify::quick_suite();
  if (full) {
    results.push_back(verify::timed([] {
      Model<float> m(ModelConfig::full());
      auto r = verify::streaming_equivalence(m, 10.0);
      r.name += " (full, 10 s)";
      return r;
    }));
  }
  bool ok = true;
  for (const auto& r : results) {
    std::printf("%-4s  %-36s %11.3g  tol %-9.3g %7.2fs  %s\n", r.passed ? "PASS" : "FAIL",
                r.name.c_str(), r.value, r.tolerance, r.seconds, r.detail.c_str());
    ok = ok && r.passed;
  }
  return ok ? kOk : kNumeric;
}

// ---- synth ------------------------------------------------------------------------

struct SynthArgs {
  std::string noisy, clean;
  double seconds = 4.0;
  double snr_db = 5.0;
};

int synth_cmd(const SynthArgs& a, std::uint64_t seed) {
  if (!(a.seconds > 0)) throw UsageError("--seconds must be positive");
  auto cfg = train::TrainConfig::toy();
  cfg.crop_seconds = a.seconds;
  cfg.snr_lo_db = cfg.snr_hi_db = a.snr_db;
  cfg.rir_prob = cfg.biquad_prob = 0.0;
  cfg.seed = seed;
  const auto pools = train::synth::pools(1, 1, 1, a.seconds, 16000, seed);
  const auto ex = train::dynamic_mix(pools, cfg, seed);
  dsp::wav_write(a.noisy, ex.mix.noisy);
  if (!a.clean.empty()) dsp::wav_write(a.clean, ex.mix.clean);
  spdlog::info("wrote {} ({:.2f} s at {} dB SNR)", a.noisy, ex.mix.noisy.duration(), a.snr_db);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  setup_logging();
  CLI::App app{"Streaming complex-domain speech enhancement", "dccrn"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "dccrn 1.0.0");
  std::uint64_t seed = 1;
  auto* seed_opt = app.add_option("--seed", seed, "Seed for initialisation, data and noise")
                       ->capture_default_str();

  EnhanceArgs ea;
  auto* enh = app.add_subcommand("enhance", "Enhance a WAV file");
  enh->add_option("input", ea.in, "Noisy input WAV")->required();
  enh->add_option("output", ea.out, "Enhanced output WAV")->required();
  enh->add_option("-c,--checkpoint", ea.checkpoint, "Model checkpoint")->required();
  enh->add_option("--config", ea.config, "Fail unless the checkpoint has this config")
      ->check(CLI::IsMember({"full", "toy", "tiny"}));
  enh->add_flag("--stream", ea.stream, "Process frame by frame and report the latency");
  enh->add_flag("--no-postproc", ea.no_postproc, "Skip the MMSE-LSA post-filter");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train-toy", "Train at desk scale and write a checkpoint");
  tr->add_option("-o,--out", ta.out, "Output checkpoint")->required();
  tr->add_option("-m,--manifest", ta.manifest, "Manifest of speech/noise/rir WAVs");
  tr->add_option("--resume", ta.resume, "Continue from a trainer checkpoint");
  tr->add_option("--config", ta.config, "Model config")
      ->check(CLI::IsMember({"full", "toy", "tiny"}))
      ->capture_default_str();
  tr->add_option("--steps", ta.steps, "Total optimizer steps (overrides the config)");
  tr->add_option("--set", ta.set, "Trainer setting key=value (repeatable)");
  tr->add_option("--log", ta.log, "Metrics log path (default stdout)");
  tr->add_option("--synthetic-speech", ta.pool_speech)->capture_default_str();
  tr->add_option("--synthetic-noise", ta.pool_noise)->capture_default_str();
  tr->add_option("--synthetic-rir", ta.pool_rir)->capture_default_str();
  tr->add_option("--synthetic-seconds", ta.pool_seconds)->capture_default_str();

  BenchArgs ba;
  auto* be = app.add_subcommand("bench", "Single-threaded real-time factor");
  be->add_option("-c,--checkpoint", ba.checkpoint, "Model checkpoint (default: fresh model)");
  be->add_option("--config", ba.config, "Model config without a checkpoint")
      ->check(CLI::IsMember({"full", "toy", "tiny"}))
      ->capture_default_str();
  be->add_option("--duration", ba.duration, "Seconds of audio per run")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  be->add_option("--runs", ba.runs, "Timed runs")->check(CLI::PositiveNumber)->capture_default_str();
  be->add_option("--threads", ba.threads, "OpenMP threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  be->add_flag("--no-postproc", ba.no_postproc, "Skip the MMSE-LSA post-filter");

  bool full = false;
  auto* ve = app.add_subcommand("verify", "Run the oracle and property checks");
  ve->add_flag("--full", full, "Add the 10 s streaming check on the full model");

  SynthArgs sa;
  auto* sy = app.add_subcommand("synth", "Write a synthetic noisy/clean pair");
  sy->add_option("noisy", sa.noisy, "Noisy output WAV")->required();
  sy->add_option("clean", sa.clean, "Clean output WAV");
  sy->add_option("--seconds", sa.seconds)->capture_default_str();
  sy->add_option("--snr", sa.snr_db, "Mixing SNR in dB")->capture_default_str();

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*enh) return enhance(ea);
    if (*tr) return train_toy(ta, seed, seed_opt->count() > 0);
    if (*be) return bench(ba, seed);
    if (*ve) return verify_cmd(full);
    if (*sy) return synth_cmd(sa, seed);
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  } catch (const NumericError& e) {
    spdlog::error("{}", e.what());
    return kNumeric;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kData;
  }
  return kUsage;
}

}  // namespace dccrn::cli
