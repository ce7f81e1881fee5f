// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dccrn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace dccrn::train {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kSilencePower = 1e-10;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

void normalize_rms(std::vector<float>& x, double rms) {
  const double p = dsp::mean_power(x);
  if (!(p > 0)) return;
  const double g = rms / std::sqrt(p);
  for (float& v : x) v = static_cast<float>(v * g);
}

// RBJ band-pass (constant peak gain).
dsp::BiquadCoeffs bandpass(double f0, double q, int sr) {
  const double w = kTwoPi * f0 / sr, alpha = std::sin(w) / (2 * q), a0 = 1 + alpha;
  return {alpha / a0, 0.0, -alpha / a0, -2 * std::cos(w) / a0, (1 - alpha) / a0};
}

std::string join_exact(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + exact_double(v[i]);
  return s;
}

std::vector<double> split_exact(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) v.push_back(parse_double(item));
  return v;
}

}  // namespace

// ---- config -------------------------------------------------------------------

void TrainConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0 && p <= 1))
      throw DataError(std::string("train config: ") + name + " must lie in [0, 1]");
  };
  prob(rir_prob, "rir_prob");
  prob(biquad_prob, "biquad_prob");
  if (!(snr_lo_db <= snr_hi_db)) throw DataError("train config: snr range is not ordered");
  if (!(lr > 0)) throw DataError("train config: lr must be positive");
  if (!(lr_decay > 0 && lr_decay <= 1)) throw DataError("train config: lr_decay must lie in (0, 1]");
  if (batch == 0) throw DataError("train config: batch must be positive");
  if (!(crop_seconds > 0)) throw DataError("train config: crop_seconds must be positive");
  if (validate_every == 0) throw DataError("train config: validate_every must be positive");
  if (val_size == 0) throw DataError("train config: val_size must be positive");
  if (!(clip_norm > 0)) throw DataError("train config: clip_norm must be positive");
  if (!(delta >= 0)) throw DataError("train config: delta must be non-negative");
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  return {{"lr", exact_double(lr)},
          {"lr_decay", exact_double(lr_decay)},
          {"snr_lo_db", exact_double(snr_lo_db)},
          {"snr_hi_db", exact_double(snr_hi_db)},
          {"rir_prob", exact_double(rir_prob)},
          {"biquad_prob", exact_double(biquad_prob)},
          {"batch", std::to_string(batch)},
          {"steps", std::to_string(steps)},
          {"crop_seconds", exact_double(crop_seconds)},
          {"validate_every", std::to_string(validate_every)},
          {"val_size", std::to_string(val_size)},
          {"clip_norm", exact_double(clip_norm)},
          {"delta", exact_double(delta)},
          {"dry_target", dry_target ? "1" : "0"},
          {"seed", std::to_string(seed)}};
}

TrainConfig TrainConfig::toy() {
  TrainConfig c;
  c.crop_seconds = 1.0;
  c.steps = 1000;
  c.validate_every = 250;
  return c;
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  auto count = [](const std::string& k, const std::string& v) {
    std::size_t pos = 0;
    unsigned long long n = 0;
    try {
      n = std::stoull(v, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != v.size() || v[0] == '-')
      throw DataError("train config: " + k + " expects a non-negative integer, got '" + v + "'");
    return n;
  };
  for (const auto& [k, v] : kv) {
    if (k == "lr") c.lr = parse_double(v);
    else if (k == "lr_decay") c.lr_decay = parse_double(v);
    else if (k == "snr_lo_db") c.snr_lo_db = parse_double(v);
    else if (k == "snr_hi_db") c.snr_hi_db = parse_double(v);
    else if (k == "rir_prob") c.rir_prob = parse_double(v);
    else if (k == "biquad_prob") c.biquad_prob = parse_double(v);
    else if (k == "batch") c.batch = count(k, v);
    else if (k == "steps") c.steps = count(k, v);
    else if (k == "crop_seconds") c.crop_seconds = parse_double(v);
    else if (k == "validate_every") c.validate_every = count(k, v);
    else if (k == "val_size") c.val_size = count(k, v);
    else if (k == "clip_norm") c.clip_norm = parse_double(v);
    else if (k == "delta") c.delta = parse_double(v);
    else if (k == "dry_target") c.dry_target = count(k, v) != 0;
    else if (k == "seed") c.seed = count(k, v);
    else throw DataError("train config: unknown key " + k);
  }
  c.validate();
  return c;
}

// ---- data ---------------------------------------------------------------------

Pools load_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw DataError("manifest: cannot open " + manifest.string());
  Pools p;
  int rate = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string role;
    if (!(ls >> role) || role[0] == '#') continue;
    std::string rest;
    std::getline(ls, rest);
    const auto b = rest.find_first_not_of(" \t");
    const auto e = rest.find_last_not_of(" \t\r");
    if (b == std::string::npos)
      throw DataError("manifest line " + std::to_string(lineno) + ": missing path");
    std::filesystem::path path = rest.substr(b, e - b + 1);
    if (path.is_relative()) path = manifest.parent_path() / path;
    std::vector<dsp::Waveform>* pool = nullptr;
    if (role == "speech") pool = &p.speech;
    else if (role == "noise") pool = &p.noise;
    else if (role == "rir") pool = &p.rir;
    else
      throw DataError("manifest line " + std::to_string(lineno) + ": unknown role '" + role + "'");
    auto w = dsp::wav_read(path);
    if (rate == 0) rate = w.sample_rate;
    if (w.sample_rate != rate)
      throw DataError("manifest: " + path.string() + " has sample rate " +
                      std::to_string(w.sample_rate) + ", expected " + std::to_string(rate));
    if (pool == &p.speech && !(dsp::mean_power(w.samples) > kSilencePower)) continue;
    pool->push_back(std::move(w));
  }
  return p;
}

namespace synth {

dsp::Waveform speech(std::size_t samples, int sr, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed ^ 0x5EEC4ull));
  std::normal_distribution<double> gauss;
  std::vector<float> x(samples, 0.0f);
  const double base_f0 = uniform(rng, 90, 240);
  const double nyq = 0.45 * sr;
  auto pos = static_cast<std::size_t>(uniform(rng, 0.0, 0.15) * sr);
  while (pos < samples) {
    if (uniform(rng, 0, 1) < 0.15) {
      // Fricative: twice-differenced noise.
      const auto len = static_cast<std::size_t>(uniform(rng, 0.05, 0.15) * sr);
      const double amp = uniform(rng, 0.1, 0.3);
      double p1 = 0, p2 = 0;
      for (std::size_t n = 0; n < len && pos + n < samples; ++n) {
        const double w = gauss(rng), d1 = w - p1, d2 = d1 - p2;
        p1 = w;
        p2 = d1;
        x[pos + n] += static_cast<float>(amp * d2 * std::sin(std::numbers::pi * n / len));
      }
      pos += len;
    } else {
      const auto len = static_cast<std::size_t>(uniform(rng, 0.1, 0.35) * sr);
      const double f_start = base_f0 * uniform(rng, 0.85, 1.15);
      const double f_end = f_start * uniform(rng, 0.8, 1.2);
      const double formant[3] = {uniform(rng, 300, 850), uniform(rng, 850, 2300),
                                 uniform(rng, 2300, 3300)};
      const double width[3] = {80, 120, 180};
      const double f_mean = 0.5 * (f_start + f_end);
      const auto harmonics = static_cast<std::size_t>(nyq / std::max(f_start, f_end));
      std::vector<double> amp(harmonics + 1, 0.0);
      for (std::size_t k = 1; k <= harmonics; ++k) {
        double env = 0;
        for (int i = 0; i < 3; ++i) {
          const double d = (k * f_mean - formant[i]) / width[i];
          env += 1.0 / (1.0 + d * d) / (i + 1);
        }
        amp[k] = env / std::sqrt(static_cast<double>(k)) + 0.02 / k;
      }
      double phase = uniform(rng, 0, kTwoPi);
      for (std::size_t n = 0; n < len && pos + n < samples; ++n) {
        const double r = static_cast<double>(n) / len;
        phase += kTwoPi * (f_start + (f_end - f_start) * r) / sr;
        double s = 0;
        for (std::size_t k = 1; k <= harmonics; ++k) s += amp[k] * std::sin(k * phase);
        x[pos + n] += static_cast<float>(s * std::pow(std::sin(std::numbers::pi * r), 0.6));
      }
      pos += len;
    }
    const bool long_pause = uniform(rng, 0, 1) < 0.15;
    pos += static_cast<std::size_t>((long_pause ? uniform(rng, 0.3, 0.6) : uniform(rng, 0.03, 0.2)) *
                                    sr);
  }
  normalize_rms(x, std::pow(10.0, uniform(rng, -28, -18) / 20));
  return {std::move(x), sr};
}

dsp::Waveform noise(std::size_t samples, int sr, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed ^ 0x4015Eull));
  std::normal_distribution<double> gauss;
  std::vector<float> x(samples, 0.0f);
  const int kind = static_cast<int>(pick(rng, 6));
  switch (kind) {
    case 0:  // white
      for (float& v : x) v = static_cast<float>(gauss(rng));
      break;
    case 1: {  // pink, Kellet's economy filter
      double b0 = 0, b1 = 0, b2 = 0;
      for (float& v : x) {
        const double w = gauss(rng);
        b0 = 0.99765 * b0 + w * 0.0990460;
        b1 = 0.96300 * b1 + w * 0.2965164;
        b2 = 0.57000 * b2 + w * 1.0526913;
        v = static_cast<float>(b0 + b1 + b2 + w * 0.1848);
      }
      break;
    }
    case 2: {  // brown, leaky integrator with a DC blocker
      double y = 0, prev = 0, hp = 0;
      for (float& v : x) {
        y = 0.995 * y + 0.1 * gauss(rng);
        hp = 0.999 * hp + y - prev;
        prev = y;
        v = static_cast<float>(hp);
      }
      break;
    }
    case 3: {  // resonant band
      for (float& v : x) v = static_cast<float>(gauss(rng));
      const auto c = bandpass(uniform(rng, 200, 5000), uniform(rng, 0.7, 4.0), sr);
      x = dsp::apply_biquad({x, sr}, c).samples;
      break;
    }
    case 4: {  // babble
      const std::uint64_t s0 = rng();
      for (int talker = 0; talker < 4; ++talker) {
        auto w = speech(samples, sr, s0 + talker);
        normalize_rms(w.samples, 1.0);
        for (std::size_t i = 0; i < samples; ++i) x[i] += w.samples[i];
      }
      break;
    }
    default: {  // mains hum with a weak hiss
      const double f = pick(rng, 2) ? 50.0 : 60.0;
      double amp[8];
      for (double& a : amp) a = uniform(rng, 0.1, 1.0);
      for (std::size_t n = 0; n < samples; ++n) {
        double s = 0.1 * gauss(rng);
        for (int k = 0; k < 8; ++k) s += amp[k] * std::sin(kTwoPi * f * (k + 1) * n / sr);
        x[n] = static_cast<float>(s);
      }
      break;
    }
  }
  const double depth = uniform(rng, 0.0, 0.6), fm = uniform(rng, 0.2, 3.0);
  const double ph = uniform(rng, 0, kTwoPi);
  for (std::size_t n = 0; n < samples; ++n)
    x[n] = static_cast<float>(x[n] * (1 + depth * std::sin(kTwoPi * fm * n / sr + ph)));
  normalize_rms(x, 0.1);
  return {std::move(x), sr};
}

dsp::Waveform rir(std::size_t samples, int sr, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed ^ 0x1212ull));
  std::normal_distribution<double> gauss;
  std::vector<float> h(samples, 0.0f);
  const double rt60 = uniform(rng, 0.15, 0.6);
  const double drr_db = uniform(rng, -3, 10);
  const std::size_t delay = std::min<std::size_t>(pick(rng, 41), samples - 1);
  const std::size_t onset = delay + 20 + pick(rng, 101);
  h[delay] = 1.0f;
  std::vector<double> tail(samples, 0.0);
  double energy = 0;
  for (std::size_t n = onset; n < samples; ++n) {
    tail[n] = gauss(rng) * std::exp(-6.908 * (n - delay) / (rt60 * sr));
    energy += tail[n] * tail[n];
  }
  const double g = energy > 0 ? std::sqrt(std::pow(10.0, -drr_db / 10) / energy) : 0.0;
  for (std::size_t n = onset; n < samples; ++n) h[n] += static_cast<float>(g * tail[n]);
  return {std::move(h), sr};
}

Pools pools(std::size_t n_speech, std::size_t n_noise, std::size_t n_rir, double seconds, int sr,
            std::uint64_t seed) {
  const auto len = static_cast<std::size_t>(std::llround(seconds * sr));
  Pools p;
  for (std::size_t i = 0; i < n_speech; ++i)
    p.speech.push_back(speech(len, sr, mix_seed(seed, 11, i)));
  for (std::size_t i = 0; i < n_noise; ++i)
    p.noise.push_back(noise(len, sr, mix_seed(seed, 12, i)));
  for (std::size_t i = 0; i < n_rir; ++i)
    p.rir.push_back(rir(static_cast<std::size_t>(0.25 * sr), sr, mix_seed(seed, 13, i)));
  return p;
}

}  // namespace synth

std::uint64_t mix_seed(std::uint64_t run_seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(run_seed) ^ stream) + index);
}

Example dynamic_mix(const Pools& pools, const TrainConfig& cfg, std::uint64_t seed) {
  if (pools.speech.empty() || pools.noise.empty())
    throw DataError("dynamic_mix: speech and noise pools must be non-empty");
  if (cfg.rir_prob > 0 && pools.rir.empty())
    throw DataError("dynamic_mix: rir_prob > 0 needs a non-empty rir pool");
  std::mt19937_64 rng(seed);
  // Every draw happens unconditionally so the stream layout never shifts.
  Example ex;
  ex.info.speech_index = pick(rng, pools.speech.size());
  const std::uint64_t crop_seed = rng();
  ex.info.noise_index = pick(rng, pools.noise.size());
  const std::uint64_t noise_offset = rng();
  ex.info.snr_db = uniform(rng, cfg.snr_lo_db, cfg.snr_hi_db);
  ex.info.rir = uniform(rng, 0, 1) < cfg.rir_prob;
  const std::size_t rir_index = pools.rir.empty() ? 0 : pick(rng, pools.rir.size());
  ex.info.biquad = uniform(rng, 0, 1) < cfg.biquad_prob;
  const std::uint64_t biquad_seed = rng();

  const auto& src = pools.speech[ex.info.speech_index];
  const int sr = src.sample_rate;
  const auto len = static_cast<std::size_t>(std::llround(cfg.crop_seconds * sr));
  dsp::Waveform dry{std::vector<float>(len, 0.0f), sr};
  std::mt19937_64 crop_rng(crop_seed);
  bool voiced = false;
  for (int attempt = 0; attempt < 9 && !voiced; ++attempt) {
    std::size_t off = src.size() > len ? pick(crop_rng, src.size() - len + 1) : 0;
    if (attempt == 8 && src.size() > len) {
      // Fall back to a crop centred on the loudest sample.
      const auto peak = static_cast<std::size_t>(
          std::max_element(src.samples.begin(), src.samples.end(),
                           [](float a, float b) { return std::abs(a) < std::abs(b); }) -
          src.samples.begin());
      off = std::min(src.size() - len, peak > len / 2 ? peak - len / 2 : 0);
    }
    const std::size_t n = std::min(len, src.size() - off);
    std::fill(dry.samples.begin(), dry.samples.end(), 0.0f);
    std::copy_n(src.samples.begin() + static_cast<std::ptrdiff_t>(off), n, dry.samples.begin());
    voiced = dsp::mean_power(dry.samples) > kSilencePower;
  }
  if (!voiced)
    throw DataError("dynamic_mix: speech " + std::to_string(ex.info.speech_index) +
                    " gave only silent crops");

  const auto& nsrc = pools.noise[ex.info.noise_index];
  dsp::Waveform noise{std::vector<float>(len), nsrc.sample_rate};
  std::mt19937_64 noise_rng(noise_offset);
  bool audible = false;
  for (int attempt = 0; attempt < 9 && !audible; ++attempt) {
    std::size_t n0 = pick(noise_rng, nsrc.size());
    if (attempt == 8)
      n0 = static_cast<std::size_t>(
          std::max_element(nsrc.samples.begin(), nsrc.samples.end(),
                           [](float a, float b) { return std::abs(a) < std::abs(b); }) -
          nsrc.samples.begin());
    for (std::size_t i = 0; i < len; ++i) noise.samples[i] = nsrc.samples[(n0 + i) % nsrc.size()];
    audible = dsp::mean_power(noise.samples) > kSilencePower;
  }
  if (!audible)
    throw DataError("dynamic_mix: noise " + std::to_string(ex.info.noise_index) +
                    " gave only silent segments");

  dsp::Waveform wet = dry;
  if (ex.info.rir) {
    // Taps beyond the crop cannot reach the truncated output.
    dsp::Waveform h = pools.rir[rir_index];
    if (h.size() >= dry.size()) h.samples.resize(dry.size() - 1);
    wet = dsp::convolve_rir(dry, h);
  }
  if (ex.info.biquad) {
    const auto c = dsp::draw_biquad(biquad_seed);
    wet = dsp::apply_biquad(wet, c);
    noise = dsp::apply_biquad(noise, c);
    if (cfg.dry_target) dry = dsp::apply_biquad(dry, c);
  }
  ex.mix = dsp::mix_at_snr(wet, noise, ex.info.snr_db);
  if (cfg.dry_target) ex.mix.clean = dry;
  return ex;
}

double lr_schedule(std::span<const double> val_history, double initial_lr, double decay) {
  double lr = initial_lr;
  for (std::size_t i = 1; i < val_history.size(); ++i)
    if (val_history[i] > val_history[i - 1]) lr *= decay;
  return lr;
}

// ---- trainer ------------------------------------------------------------------

template <typename T>
struct Trainer<T>::Prepared {
  ComplexVar<T> noisy;
  ad::Var<T> ref;
  ad::Var<T> labels;
};

template <typename T>
Trainer<T>::Trainer(Model<T>& model, TrainConfig cfg, Pools pools)
    : model_(model), cfg_(cfg), pools_(std::move(pools)), adam_(AdamConfig{cfg.lr}) {
  cfg_.validate();
  const int sr = model_.config().frame.sample_rate;
  for (const auto* pool : {&pools_.speech, &pools_.noise, &pools_.rir})
    for (const auto& w : *pool)
      if (w.sample_rate != sr)
        throw DataError("trainer: pool audio at " + std::to_string(w.sample_rate) +
                        " Hz, model expects " + std::to_string(sr) + " Hz");
  if (!pools_.speech.empty() && !pools_.noise.empty())
    for (std::size_t i = 0; i < cfg_.val_size; ++i)
      val_set_.push_back(dynamic_mix(pools_, cfg_, mix_seed(cfg_.seed, 2, i)).mix);
}

template <typename T>
typename Trainer<T>::Prepared Trainer<T>::prepare(const std::vector<dsp::Mixture>& batch,
                                                  targets::SnrLabelState& labels) const {
  if (batch.empty()) throw DataError("trainer: empty batch");
  const auto& fc = model_.config().frame;
  const std::size_t B = batch.size(), S = batch[0].noisy.size();
  if (S < fc.frame_len) throw DataError("trainer: mixtures shorter than one frame");
  const std::size_t TT = fc.frames_for(S), F = fc.bins(), N = fc.samples_for(TT);
  Tensor<T> re({B, TT, F}), im({B, TT, F}), ref({B, N}), lab({B, TT});
  auto spec_of = [&](const dsp::Waveform& w) {
    std::vector<T> v(w.samples.begin(), w.samples.end());
    return dsp::stft<T>(v, fc);
  };
  for (std::size_t b = 0; b < B; ++b) {
    const auto& m = batch[b];
    if (m.noisy.size() != S || m.clean.size() != S || m.noise.size() != S)
      throw ShapeError("trainer: batch item " + std::to_string(b) + " has " +
                       std::to_string(m.noisy.size()) + " samples, expected " + std::to_string(S));
    const auto y = spec_of(m.noisy), x = spec_of(m.clean), n = spec_of(m.noise);
    std::copy_n(y.re.ptr(), TT * F, re.ptr() + b * TT * F);
    std::copy_n(y.im.ptr(), TT * F, im.ptr() + b * TT * F);
    const auto r = dsp::istft(x, fc);
    std::copy_n(r.data(), N, ref.ptr() + b * N);
    const auto xi = targets::snr_label_raw(x, n);
    labels.update(xi);
    const auto l = targets::snr_label_normalize_compress(xi, labels);
    for (std::size_t t = 0; t < TT; ++t) lab[b * TT + t] = static_cast<T>(l[t]);
  }
  return {{ad::Var<T>(std::move(re)), ad::Var<T>(std::move(im))},
          ad::Var<T>(std::move(ref)),
          ad::Var<T>(std::move(lab))};
}

template <typename T>
StepMetrics Trainer<T>::train_step(const std::vector<dsp::Mixture>& batch) {
  auto p = prepare(batch, labels_);
  model_.params().zero_grad();
  auto out = model_.forward(p.noisy, true);
  auto est = dsp::istft(out.enhanced.re, out.enhanced.im, model_.config().frame);
  targets::LossParts parts;
  auto loss = targets::combined_loss(est, p.ref, out.snr, p.labels, cfg_.delta, &parts);
  auto diagnose = [&](const std::string& what) {
    std::ostringstream msg;
    msg << what << " at step " << step_ << "; stage output norms:";
    for (const auto& [name, norm] : model_.output_norms()) msg << ' ' << name << '=' << norm;
    return msg.str();
  };
  if (!std::isfinite(parts.total)) throw NumericError(diagnose("non-finite loss"));
  ad::backward(loss);
  StepMetrics m;
  m.grad_norm = clip_grad_norm(model_.params(), cfg_.clip_norm);
  try {
    adam_.step(model_.params());
  } catch (const NumericError& e) {
    throw NumericError(diagnose(e.what()));
  }
  ++step_;
  m.step = step_;
  m.loss = parts.total;
  m.si_snr = parts.si_snr;
  m.snr = parts.snr_mse;
  m.lr = adam_.lr();
  return m;
}

template <typename T>
std::vector<dsp::Mixture> Trainer<T>::draw_batch(std::size_t step_index) const {
  std::vector<dsp::Mixture> batch;
  for (std::size_t i = 0; i < cfg_.batch; ++i)
    batch.push_back(
        dynamic_mix(pools_, cfg_, mix_seed(cfg_.seed, 1, step_index * cfg_.batch + i)).mix);
  return batch;
}

template <typename T>
StepMetrics Trainer<T>::step() {
  return train_step(draw_batch(step_));
}

template <typename T>
double Trainer<T>::evaluate(const std::vector<dsp::Mixture>& set) {
  if (set.empty()) throw DataError("trainer: empty evaluation set");
  ad::NoGradGuard ng;
  auto labels = labels_;
  double total = 0;
  for (std::size_t i = 0; i < set.size(); i += cfg_.batch) {
    const std::vector<dsp::Mixture> chunk(
        set.begin() + static_cast<std::ptrdiff_t>(i),
        set.begin() + static_cast<std::ptrdiff_t>(std::min(set.size(), i + cfg_.batch)));
    auto p = prepare(chunk, labels);
    auto out = model_.forward(p.noisy, false);
    auto est = dsp::istft(out.enhanced.re, out.enhanced.im, model_.config().frame);
    targets::LossParts parts;
    targets::combined_loss(est, p.ref, out.snr, p.labels, cfg_.delta, &parts);
    total += parts.total * static_cast<double>(chunk.size());
  }
  return total / static_cast<double>(set.size());
}

template <typename T>
double Trainer<T>::validate() {
  const double loss = evaluate(val_set_);
  val_history_.push_back(loss);
  adam_.set_lr(lr_schedule(val_history_, cfg_.lr, cfg_.lr_decay));
  return loss;
}

template <typename T>
void Trainer<T>::run(std::size_t steps, const std::function<void(const StepMetrics&)>& on_step,
                     const std::function<void(std::size_t, double)>& on_validate) {
  while (step_ < steps) {
    const auto m = step();
    if (on_step) on_step(m);
    if (step_ % cfg_.validate_every == 0) {
      const double v = validate();
      if (on_validate) on_validate(step_, v);
    }
  }
}

template <typename T>
void Trainer<T>::save(const std::filesystem::path& path,
                      const std::map<std::string, std::string>& extra) const {
  Checkpoint ck;
  ck.header = extra;
  export_model(model_, ck);
  for (const auto& [k, v] : cfg_.to_map()) ck.header["train." + k] = v;
  ck.header["state.step"] = std::to_string(step_);
  ck.header["state.lr"] = exact_double(adam_.lr());
  ck.header["state.adam_steps"] = std::to_string(adam_.steps());
  ck.header["state.label_mu"] = exact_double(labels_.mu_hat);
  ck.header["state.label_sigma"] = exact_double(labels_.sigma_hat);
  ck.header["state.label_alpha"] = exact_double(labels_.alpha);
  ck.header["state.label_initialized"] = labels_.initialized ? "1" : "0";
  ck.header["state.val_history"] = join_exact(val_history_);
  for (const auto& [name, mom] : adam_.moments()) {
    ck.blobs.push_back(Blob::from_tensor("adam/" + name + "/m", mom.m));
    ck.blobs.push_back(Blob::from_tensor("adam/" + name + "/v", mom.v));
  }
  write_checkpoint(path, ck);
}

template <typename T>
void Trainer<T>::load(const std::filesystem::path& path) {
  const auto ck = read_checkpoint(path);
  std::map<std::string, std::string> stored;
  for (const auto& [k, v] : ck.header)
    if (k.rfind("train.", 0) == 0) stored[k.substr(6)] = v;
  auto mine = cfg_.to_map();
  // The step budget may be extended on resume.
  stored.erase("steps");
  mine.erase("steps");
  if (stored != mine) throw DataError("trainer: checkpoint was written with a different config");
  load_model_state(ck, model_);
  auto count = [&](const std::string& key) {
    try {
      return static_cast<std::size_t>(std::stoull(ck.at(key)));
    } catch (const std::logic_error&) {
      throw DataError("trainer: bad value for " + key);
    }
  };
  step_ = count("state.step");
  adam_.set_lr(parse_double(ck.at("state.lr")));
  adam_.set_steps(count("state.adam_steps"));
  labels_.mu_hat = parse_double(ck.at("state.label_mu"));
  labels_.sigma_hat = parse_double(ck.at("state.label_sigma"));
  labels_.alpha = parse_double(ck.at("state.label_alpha"));
  labels_.initialized = ck.at("state.label_initialized") == "1";
  val_history_ = split_exact(ck.at("state.val_history"));
  adam_.moments().clear();
  for (const auto& b : ck.blobs) {
    if (b.name.rfind("adam/", 0) != 0) continue;
    const auto slash = b.name.rfind('/');
    const auto name = b.name.substr(5, slash - 5);
    auto& mom = adam_.moments()[name];
    (b.name.substr(slash) == "/m" ? mom.m : mom.v) = b.to_tensor<T>();
  }
  for (const auto& [name, mom] : adam_.moments())
    if (!model_.params().contains(name) || mom.m.shape() != model_.params().get(name).shape() ||
        mom.v.shape() != mom.m.shape())
      throw DataError("trainer: optimizer state for " + name + " does not match the model");
}

template class Trainer<float>;
template class Trainer<double>;

}  // namespace dccrn::train
