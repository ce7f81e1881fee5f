// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <cmath>
#include <fstream>

#include "dccrn/trainer.hpp"

using namespace dccrn;
using namespace dccrn::train;

namespace {

// Short clips and impulse responses for the tiny model.
TrainConfig tiny_train_config() {
  TrainConfig c;
  c.batch = 2;
  c.crop_seconds = 0.01;
  c.val_size = 2;
  c.validate_every = 2;
  return c;
}

Pools tiny_pools(std::uint64_t seed) {
  auto p = synth::pools(3, 3, 0, 0.5, 16000, seed);
  for (std::size_t i = 0; i < 2; ++i) p.rir.push_back(synth::rir(40, 16000, seed + i));
  return p;
}

double power_db(const std::vector<float>& a, const std::vector<float>& b) {
  double pa = 0, pb = 0;
  for (float v : a) pa += static_cast<double>(v) * v;
  for (float v : b) pb += static_cast<double>(v) * v;
  return 10 * std::log10(pa / pb);
}

}  // namespace

TEST_CASE("train config") {
  TrainConfig c;
  CHECK(c.lr == 1e-3);
  CHECK(c.lr_decay == 0.5);
  CHECK(c.snr_lo_db == -5.0);
  CHECK(c.snr_hi_db == 20.0);
  CHECK(c.rir_prob == 0.5);
  CHECK(c.biquad_prob == 0.5);
  CHECK(c.validate_every == 500);
  auto back = TrainConfig::from_map(c.to_map());
  CHECK(back.to_map() == c.to_map());
  CHECK(TrainConfig::from_map({{"lr", "0.002"}, {"batch", "3"}}).lr == 0.002);

  auto bad = c;
  bad.rir_prob = 1.5;
  CHECK_THROWS_AS(bad.validate(), DataError);
  bad = c;
  bad.snr_lo_db = 30;
  CHECK_THROWS_AS(bad.validate(), DataError);
  CHECK_THROWS_AS(TrainConfig::from_map({{"batch", "-1"}}), DataError);
  CHECK_THROWS_AS(TrainConfig::from_map({{"nope", "1"}}), DataError);
}

TEST_CASE("synthetic audio") {
  auto s = synth::speech(16000, 16000, 3);
  CHECK(s.samples == synth::speech(16000, 16000, 3).samples);
  CHECK(s.samples != synth::speech(16000, 16000, 4).samples);
  // Pauses give a wide spread of 10 ms frame energies.
  double lo = 1e9, hi = 0;
  for (std::size_t f = 0; f + 160 <= s.size(); f += 160) {
    double e = 0;
    for (std::size_t i = 0; i < 160; ++i) e += s.samples[f + i] * s.samples[f + i];
    lo = std::min(lo, e);
    hi = std::max(hi, e);
  }
  CHECK(hi > 1000 * (lo + 1e-12));
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    auto n = synth::noise(8000, 16000, seed);
    CHECK(dsp::mean_power(n.samples) == doctest::Approx(0.01).epsilon(1e-3));
  }
  auto h = synth::rir(4000, 16000, 5);
  std::size_t peak = 0;
  for (std::size_t i = 0; i < h.size(); ++i)
    if (std::abs(h.samples[i]) > std::abs(h.samples[peak])) peak = i;
  CHECK(h.samples[peak] == 1.0f);
  CHECK(peak <= 40);
}

TEST_CASE("dynamic mixing") {
  auto pools = tiny_pools(1);
  auto cfg = tiny_train_config();
  cfg.crop_seconds = 0.05;
  const auto a = dynamic_mix(pools, cfg, 42), b = dynamic_mix(pools, cfg, 42);
  CHECK(a.mix.noisy.samples == b.mix.noisy.samples);
  CHECK(a.mix.clean.samples == b.mix.clean.samples);
  CHECK(a.info.snr_db == b.info.snr_db);
  CHECK(a.mix.noisy.size() == 800);

  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto ex = dynamic_mix(pools, cfg, seed);
    CHECK(ex.info.snr_db >= -5.0);
    CHECK(ex.info.snr_db <= 20.0);
    CHECK(power_db(ex.mix.clean.samples, ex.mix.noise.samples) ==
          doctest::Approx(ex.info.snr_db).epsilon(1e-6));
  }

  // Monte-Carlo application rates.
  cfg.crop_seconds = 0.005;
  std::size_t rir = 0, biquad = 0;
  const std::size_t draws = 10000;
  for (std::uint64_t seed = 0; seed < draws; ++seed) {
    const auto info = dynamic_mix(pools, cfg, mix_seed(7, 1, seed)).info;
    rir += info.rir;
    biquad += info.biquad;
  }
  CHECK(std::abs(static_cast<double>(rir) / draws - 0.5) < 0.02);
  CHECK(std::abs(static_cast<double>(biquad) / draws - 0.5) < 0.02);

  auto never = cfg;
  never.rir_prob = 0;
  never.biquad_prob = 0;
  const auto plain = dynamic_mix(pools, never, 9);
  CHECK_FALSE(plain.info.rir);
  for (std::size_t i = 0; i < plain.mix.noisy.size(); ++i)
    CHECK(plain.mix.noisy.samples[i] == plain.mix.clean.samples[i] + plain.mix.noise.samples[i]);

  auto always = cfg;
  always.rir_prob = 1;
  always.dry_target = true;
  always.crop_seconds = 0.05;
  const auto wet = dynamic_mix(pools, always, 9);
  CHECK(wet.info.rir);
  CHECK(power_db(wet.mix.clean.samples, wet.mix.noise.samples) != doctest::Approx(wet.info.snr_db));

  Pools empty = pools;
  empty.noise.clear();
  CHECK_THROWS_AS(dynamic_mix(empty, cfg, 1), DataError);
  empty = pools;
  empty.rir.clear();
  CHECK_THROWS_AS(dynamic_mix(empty, cfg, 1), DataError);
}

TEST_CASE("learning-rate schedule") {
  const std::vector<double> down{5, 4, 3, 2.5};
  CHECK(lr_schedule(down, 1e-3, 0.5) == 1e-3);
  CHECK(lr_schedule(std::vector<double>{5}, 1e-3, 0.5) == 1e-3);
  CHECK(lr_schedule(std::vector<double>{5, 6}, 1e-3, 0.5) == 5e-4);

  const std::vector<double> zigzag{5, 6, 4, 4.5, 3, 3, 3.2, 3.1, 3.3};
  double lr = 1e-3;
  std::vector<double> hand{1e-3};
  for (std::size_t i = 1; i < zigzag.size(); ++i) {
    if (zigzag[i] > zigzag[i - 1]) lr /= 2;
    hand.push_back(lr);
  }
  for (std::size_t n = 1; n <= zigzag.size(); ++n)
    CHECK(lr_schedule(std::span(zigzag).first(n), 1e-3, 0.5) == hand[n - 1]);
  CHECK(hand.back() == 1e-3 / 16);
}

TEST_CASE("training steps") {
  Model<double> model(ModelConfig::tiny());
  Trainer<double> tr(model, tiny_train_config(), tiny_pools(2));
  const auto batch = tr.draw_batch(0);
  REQUIRE(batch.size() == 2);
  CHECK(batch[0].noisy.samples == tr.draw_batch(0)[0].noisy.samples);
  CHECK(batch[0].noisy.samples != tr.draw_batch(1)[0].noisy.samples);

  const auto m = tr.train_step(batch);
  CHECK(m.step == 1);
  CHECK(std::isfinite(m.si_snr));
  CHECK(m.snr > 0);
  CHECK(m.loss == doctest::Approx(m.si_snr + 30 * m.snr).epsilon(1e-12));
  CHECK(m.lr == 1e-3);
  CHECK(tr.label_state().initialized);

  // Overfitting one fixed batch: windowed loss means fall.
  std::vector<double> losses;
  for (int i = 0; i < 200; ++i) losses.push_back(tr.train_step(batch).loss);
  std::vector<double> window;
  for (std::size_t w = 0; w < 200; w += 40) {
    double s = 0;
    for (std::size_t i = w; i < w + 40; ++i) s += losses[i];
    window.push_back(s / 40);
  }
  for (std::size_t i = 1; i < window.size(); ++i) CHECK(window[i] < window[i - 1]);

  // evaluate() leaves state alone.
  const auto before = tr.label_state().mu_hat;
  const double v1 = tr.evaluate(tr.validation_set());
  CHECK(tr.evaluate(tr.validation_set()) == v1);
  CHECK(tr.label_state().mu_hat == before);
  CHECK(tr.step_count() == 201);
}

TEST_CASE("non-finite loss reports stage norms") {
  Model<double> model(ModelConfig::tiny());
  Trainer<double> tr(model, tiny_train_config(), tiny_pools(3));
  model.params().get("encoder.0.w_re").mutable_value()[0] = std::nan("");
  try {
    tr.train_step(tr.draw_batch(0));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("subband=") != std::string::npos);
    CHECK(msg.find("encoder.0=nan") != std::string::npos);
  }
}

TEST_CASE("deterministic runs and bit-identical resume") {
  const auto path = std::filesystem::temp_directory_path() / "dccrn_test_trainer.ckpt";
  auto metrics = [](Trainer<float>& tr, std::size_t until) {
    std::vector<StepMetrics> out;
    tr.run(until, [&](const StepMetrics& m) { out.push_back(m); });
    return out;
  };
  auto same = [](const std::vector<StepMetrics>& a, const std::vector<StepMetrics>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i].loss != b[i].loss || a[i].si_snr != b[i].si_snr || a[i].snr != b[i].snr ||
          a[i].lr != b[i].lr || a[i].grad_norm != b[i].grad_norm || a[i].step != b[i].step)
        return false;
    return true;
  };
  auto cfg = tiny_train_config();
  cfg.lr = 3e-2;

  Model<float> m1(ModelConfig::tiny());
  Trainer<float> t1(m1, cfg, tiny_pools(4));
  metrics(t1, 4);
  t1.save(path);
  const auto tail1 = metrics(t1, 8);

  Model<float> m2(ModelConfig::tiny());
  Trainer<float> t2(m2, cfg, tiny_pools(4));
  const auto head2 = metrics(t2, 4);
  Model<float> m3(ModelConfig::tiny());
  Trainer<float> t3(m3, cfg, tiny_pools(4));
  t3.load(path);
  CHECK(t3.step_count() == 4);
  CHECK(t3.val_history().size() == 2);
  const auto tail3 = metrics(t3, 8);
  CHECK(same(tail1, tail3));
  CHECK(t3.val_history() == t1.val_history());
  CHECK(t3.lr() == t1.lr());

  const auto tail2 = metrics(t2, 8);
  CHECK(same(tail1, tail2));

  auto other = cfg;
  other.seed = 99;
  Model<float> m4(ModelConfig::tiny());
  Trainer<float> t4(m4, other, tiny_pools(4));
  CHECK_THROWS_AS(t4.load(path), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("manifest") {
  const auto dir = std::filesystem::temp_directory_path() / "dccrn_test_manifest";
  std::filesystem::create_directories(dir);
  dsp::wav_write(dir / "s.wav", synth::speech(4000, 16000, 1));
  dsp::wav_write(dir / "quiet.wav", dsp::Waveform{std::vector<float>(4000, 0.0f), 16000});
  dsp::wav_write(dir / "n.wav", synth::noise(4000, 16000, 1));
  dsp::wav_write(dir / "h.wav", synth::rir(400, 16000, 1));
  dsp::wav_write(dir / "fast.wav", dsp::Waveform{std::vector<float>(10, 0.1f), 8000});
  {
    std::ofstream out(dir / "m.txt");
    out << "# pools\nspeech s.wav\nspeech quiet.wav\n\nnoise  n.wav\nrir " << (dir / "h.wav").string()
        << "\n";
  }
  const auto p = load_manifest(dir / "m.txt");
  CHECK(p.speech.size() == 1);
  CHECK(p.noise.size() == 1);
  CHECK(p.rir.size() == 1);

  {
    std::ofstream out(dir / "bad.txt");
    out << "music s.wav\n";
  }
  CHECK_THROWS_AS(load_manifest(dir / "bad.txt"), DataError);
  {
    std::ofstream out(dir / "rate.txt");
    out << "speech s.wav\nnoise fast.wav\n";
  }
  CHECK_THROWS_AS(load_manifest(dir / "rate.txt"), DataError);
  CHECK_THROWS_AS(load_manifest(dir / "missing.txt"), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("dynamic mixing with crops shorter than the impulse responses") {
  auto pools = train::synth::pools(2, 2, 2, 1.0, 16000, 3);
  REQUIRE(pools.rir.front().size() == 4000);
  train::TrainConfig cfg;
  cfg.crop_seconds = 0.2;
  cfg.rir_prob = 1.0;
  const auto ex = train::dynamic_mix(pools, cfg, 11);
  CHECK(ex.info.rir);
  CHECK(ex.mix.noisy.size() == 3200);
  CHECK(ex.mix.clean.size() == 3200);
}
