// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "dccrn/checkpoint.hpp"
#include "dccrn/dsp.hpp"
#include "dccrn/kernels.hpp"
#include "dccrn/rtf.hpp"
#include "dccrn/trainer.hpp"

using namespace dccrn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("dccrn_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "dccrn");
  return dccrn::cli::run(args);
}

std::string write_model(const TempDir& dir, const ModelConfig& cfg, const std::string& name) {
  Model<float> m(cfg);
  Checkpoint ck;
  export_model(m, ck);
  const auto path = dir / name;
  write_checkpoint(path, ck);
  return path;
}

dsp::Waveform noisy_clip(double seconds) {
  auto cfg = train::TrainConfig::toy();
  cfg.crop_seconds = seconds;
  cfg.rir_prob = cfg.biquad_prob = 0.0;
  cfg.snr_lo_db = cfg.snr_hi_db = 0.0;
  return train::dynamic_mix(train::synth::pools(1, 1, 1, seconds, 16000, 4), cfg, 4).mix.noisy;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  REQUIRE(a.size() == b.size());
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(double(a[i]) - b[i]));
  return d;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("cli usage errors exit with 1") {
  CHECK(run_cli({}) == cli::kUsage);
  CHECK(run_cli({"frobnicate"}) == cli::kUsage);
  CHECK(run_cli({"enhance", "a.wav"}) == cli::kUsage);
  CHECK(run_cli({"bench", "--runs", "0"}) == cli::kUsage);
  CHECK(run_cli({"--help"}) == cli::kOk);
}

TEST_CASE("cli enhance data errors exit with 2") {
  TempDir dir;
  const auto ck = write_model(dir, ModelConfig::toy(), "toy.ck");
  const auto in = dir / "in.wav";
  dsp::wav_write(in, noisy_clip(0.5));
  CHECK(run_cli({"enhance", dir / "missing.wav", dir / "o.wav", "-c", ck}) == cli::kData);
  CHECK(run_cli({"enhance", in, dir / "o.wav", "-c", dir / "missing.ck"}) == cli::kData);
  CHECK(run_cli({"enhance", in, dir / "o.wav", "-c", ck, "--config", "full"}) == cli::kData);
  CHECK_FALSE(fs::exists(dir / "o.wav"));

  dsp::Waveform narrow{std::vector<float>(800, 0.1f), 8000};
  dsp::wav_write(dir / "8k.wav", narrow);
  CHECK(run_cli({"enhance", dir / "8k.wav", dir / "o.wav", "-c", ck}) == cli::kData);

  std::ofstream(dir / "junk.ck") << "not a checkpoint";
  CHECK(run_cli({"enhance", in, dir / "o.wav", "-c", dir / "junk.ck"}) == cli::kData);
}

TEST_CASE("cli enhance: zero input, streaming and the post-filter flag") {
  TempDir dir;
  const auto ck = write_model(dir, ModelConfig::toy(), "toy.ck");

  dsp::wav_write(dir / "zero.wav", dsp::Waveform{std::vector<float>(8000, 0.0f), 16000});
  for (const char* flag : {"--stream", "--no-postproc"}) {
    REQUIRE(run_cli({"enhance", dir / "zero.wav", dir / "z.wav", "-c", ck, flag}) == cli::kOk);
    const auto z = dsp::wav_read(dir / "z.wav");
    CHECK(z.size() == 8000);
    double peak = 0;
    for (float v : z.samples) peak = std::max(peak, std::abs(double(v)));
    CHECK(peak == 0.0);
  }

  const auto in = dir / "in.wav";
  const auto x = noisy_clip(1.0);
  dsp::wav_write(in, x);
  REQUIRE(run_cli({"enhance", in, dir / "off.wav", "-c", ck}) == cli::kOk);
  REQUIRE(run_cli({"enhance", in, dir / "str.wav", "-c", ck, "--stream"}) == cli::kOk);
  REQUIRE(run_cli({"enhance", in, dir / "raw.wav", "-c", ck, "--no-postproc"}) == cli::kOk);
  const auto off = dsp::wav_read(dir / "off.wav").samples;
  const auto str = dsp::wav_read(dir / "str.wav").samples;
  const auto raw = dsp::wav_read(dir / "raw.wav").samples;
  CHECK(off.size() == x.size());
  CHECK(max_abs_diff(off, str) < 1e-5);
  CHECK(max_abs_diff(off, raw) > 1e-3);
}

TEST_CASE("cli train-toy writes a key=value log and a loadable checkpoint") {
  TempDir dir;
  const std::vector<std::string> common{
      "train-toy",          "--config",           "tiny",  "--steps", "4",
      "--set",              "validate_every=2",   "--set", "crop_seconds=0.25",
      "--synthetic-speech", "3",                  "--synthetic-noise", "3",
      "--synthetic-rir",    "2",                  "--synthetic-seconds", "1"};
  auto with = [&](std::vector<std::string> extra) {
    auto a = common;
    a.insert(a.end(), extra.begin(), extra.end());
    a.insert(a.begin(), {"--seed", "9"});
    return run_cli(a);
  };
  REQUIRE(with({"-o", dir / "a.ck", "--log", dir / "a.log"}) == cli::kOk);
  REQUIRE(with({"-o", dir / "b.ck", "--log", dir / "b.log"}) == cli::kOk);
  const auto log = slurp(dir / "a.log");
  CHECK(log == slurp(dir / "b.log"));

  std::istringstream lines(log);
  std::string line;
  std::size_t steps = 0, validations = 0;
  while (std::getline(lines, line)) {
    if (line.rfind("step=", 0) == 0) {
      ++steps;
      for (const char* key : {"L_SI-SNR=", "L_SNR=", "lr="})
        CHECK(line.find(key) != std::string::npos);
    } else {
      CHECK(line.rfind("validate step=", 0) == 0);
      ++validations;
    }
  }
  CHECK(steps == 4);
  CHECK(validations == 2);

  const auto ck = read_checkpoint(dir / "a.ck");
  CHECK(ck.at("state.step") == "4");
  auto expected = ModelConfig::tiny();
  expected.seed = 9;
  CHECK(import_model<float>(ck)->config() == expected);
  dsp::wav_write(dir / "in.wav", dsp::Waveform{std::vector<float>(800, 0.1f), 16000});
  CHECK(run_cli({"enhance", dir / "in.wav", dir / "o.wav", "-c", dir / "a.ck", "--config", "tiny"}) ==
        cli::kOk);

  CHECK(with({"-o", dir / "c.ck", "--set", "no_such_key=1"}) == cli::kData);
  CHECK(with({"-o", dir / "c.ck", "--set", "lr"}) == cli::kUsage);
  CHECK(run_cli({"train-toy", "-o", dir / "c.ck", "-m", dir / "missing.txt"}) == cli::kData);
}

TEST_CASE("cli train-toy resume continues the same run") {
  TempDir dir;
  const std::vector<std::string> opts{"--config", "tiny", "--set", "validate_every=2",
                                      "--set", "crop_seconds=0.25", "--synthetic-speech", "3",
                                      "--synthetic-noise", "3", "--synthetic-rir", "2",
                                      "--synthetic-seconds", "1"};
  auto train = [&](std::vector<std::string> a) {
    a.insert(a.begin(), {"--seed", "5", "train-toy"});
    a.insert(a.end(), opts.begin(), opts.end());
    return run_cli(a);
  };
  REQUIRE(train({"-o", dir / "half.ck", "--steps", "2", "--log", dir / "r.log"}) == cli::kOk);
  REQUIRE(run_cli({"train-toy", "-o", dir / "resumed.ck", "--resume", dir / "half.ck", "--steps", "4",
               "--log", dir / "r.log"}) == cli::kOk);
  REQUIRE(train({"-o", dir / "straight.ck", "--steps", "4", "--log", dir / "s.log"}) == cli::kOk);
  CHECK(slurp(dir / "r.log") == slurp(dir / "s.log"));
  CHECK(slurp(dir / "resumed.ck") == slurp(dir / "straight.ck"));
}

TEST_CASE("cli bench and synth") {
  TempDir dir;
  CHECK(run_cli({"bench", "--config", "tiny", "--duration", "0.2", "--runs", "5"}) == cli::kOk);
  REQUIRE(run_cli({"--seed", "3", "synth", dir / "n.wav", dir / "c.wav", "--seconds", "0.5"}) ==
          cli::kOk);
  REQUIRE(run_cli({"--seed", "3", "synth", dir / "n2.wav", "--seconds", "0.5"}) == cli::kOk);
  CHECK(slurp(dir / "n.wav") == slurp(dir / "n2.wav"));
  CHECK(dsp::wav_read(dir / "c.wav").size() == 8000);
}

TEST_CASE("rtf report: accounting, monotone cost, thread count restored") {
  const int before = kernels::parallel::num_threads();
  rtf::RtfOptions opt;
  opt.seconds = 1.0;
  Model<float> toy(ModelConfig::toy()), full(ModelConfig::full());
  const auto a = rtf::measure(toy, opt);
  const auto b = rtf::measure(full, opt);
  CHECK(kernels::parallel::num_threads() == before);
  CHECK(a.runs == 5);
  CHECK(a.totals.size() == 5);
  CHECK(a.accounting_gap() < 0.05);
  CHECK(b.accounting_gap() < 0.05);
  CHECK(a.rtf() < b.rtf());
  const auto text = rtf::format(b);
  for (const char* stage : {"stft", "subband", "encoder", "tf_lstm", "decoder", "postproc", "0.250"})
    CHECK(text.find(stage) != std::string::npos);
}
