// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Desk-scale training: dynamic mixing with augmentation, the combined
// objective, Adam with loss-triggered learning-rate halving, validation and
// resumable checkpoints.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dccrn/checkpoint.hpp"
#include "dccrn/dsp.hpp"
#include "dccrn/losses.hpp"
#include "dccrn/model.hpp"
#include "dccrn/params.hpp"

namespace dccrn::train {

struct TrainConfig {
  double lr = 1e-3;
  double lr_decay = 0.5;
  double snr_lo_db = -5.0;
  double snr_hi_db = 20.0;
  double rir_prob = 0.5;
  double biquad_prob = 0.5;
  std::size_t batch = 4;
  std::size_t steps = 2000;
  double crop_seconds = 4.0;
  std::size_t validate_every = 500;
  std::size_t val_size = 8;
  double clip_norm = 5.0;
  double delta = targets::kDelta;
  // Train towards dry speech instead of the reverberant clean signal.
  bool dry_target = false;
  std::uint64_t seed = 1;

  // Desk-scale schedule for the reduced-width model: 1 s crops, 1000 steps,
  // validation every 250.
  static TrainConfig toy();
  // DataError on out-of-range fields.
  void validate() const;
  std::map<std::string, std::string> to_map() const;
  static TrainConfig from_map(const std::map<std::string, std::string>& kv);
};

struct Pools {
  std::vector<dsp::Waveform> speech;
  std::vector<dsp::Waveform> noise;
  std::vector<dsp::Waveform> rir;
};

// Manifest lines are "<role> <path>" with role speech, noise or rir; blank
// lines and lines starting with '#' are skipped. Relative paths resolve
// against the manifest's directory. Silent speech files are dropped.
Pools load_manifest(const std::filesystem::path& manifest);

// Deterministic synthetic audio for desk-scale runs.
namespace synth {

// Voiced syllables (glottal harmonics through three random formants) and
// occasional fricative bursts, separated by pauses.
dsp::Waveform speech(std::size_t samples, int sample_rate, std::uint64_t seed);
// One of: white, pink, brown, resonant band, babble, hum; slowly modulated.
dsp::Waveform noise(std::size_t samples, int sample_rate, std::uint64_t seed);
// Direct path plus an exponentially decaying diffuse tail.
dsp::Waveform rir(std::size_t samples, int sample_rate, std::uint64_t seed);

Pools pools(std::size_t n_speech, std::size_t n_noise, std::size_t n_rir, double seconds,
            int sample_rate, std::uint64_t seed);

}  // namespace synth

struct MixInfo {
  std::size_t speech_index = 0;
  std::size_t noise_index = 0;
  double snr_db = 0;
  bool rir = false;
  bool biquad = false;
};

struct Example {
  dsp::Mixture mix;
  MixInfo info;
};

// Crops speech to crop_seconds, optionally reverberates it and filters
// speech and noise with one random biquad, then mixes at a uniform SNR.
Example dynamic_mix(const Pools& pools, const TrainConfig& cfg, std::uint64_t seed);

// Learning rate after a sequence of validation losses: halved once for every
// loss that exceeds its predecessor.
double lr_schedule(std::span<const double> val_history, double initial_lr, double decay);

struct StepMetrics {
  std::size_t step = 0;
  double loss = 0;
  double si_snr = 0;  // SI-SNR loss term
  double snr = 0;     // SNR-estimation MSE term
  double lr = 0;
  double grad_norm = 0;
};

template <typename T>
class Trainer {
 public:
  Trainer(Model<T>& model, TrainConfig cfg, Pools pools);

  // One optimizer step on the given mixtures (equal lengths). Throws
  // NumericError with per-stage output norms when the loss is not finite.
  StepMetrics train_step(const std::vector<dsp::Mixture>& batch);
  // One step on a freshly mixed batch; the batch depends only on the seed
  // and the step index.
  StepMetrics step();
  // Combined loss in eval mode; leaves all training state untouched.
  double evaluate(const std::vector<dsp::Mixture>& set);
  // Validates on the held-out set, records the loss and updates the lr.
  double validate();
  // Steps until the step counter reaches `steps`, validating every validate_every.
  void run(std::size_t steps, const std::function<void(const StepMetrics&)>& on_step = {},
           const std::function<void(std::size_t, double)>& on_validate = {});

  std::vector<dsp::Mixture> draw_batch(std::size_t step_index) const;
  const std::vector<dsp::Mixture>& validation_set() const { return val_set_; }

  // `extra` header entries are stored verbatim next to the trainer's own.
  void save(const std::filesystem::path& path,
            const std::map<std::string, std::string>& extra = {}) const;
  // Restores model, optimizer, label statistics and progress. The config
  // stored in the file must match this trainer's.
  void load(const std::filesystem::path& path);

  std::size_t step_count() const { return step_; }
  double lr() const { return adam_.lr(); }
  const std::vector<double>& val_history() const { return val_history_; }
  const targets::SnrLabelState& label_state() const { return labels_; }
  const TrainConfig& config() const { return cfg_; }
  Model<T>& model() { return model_; }

 private:
  struct Prepared;
  Prepared prepare(const std::vector<dsp::Mixture>& batch, targets::SnrLabelState& labels) const;

  Model<T>& model_;
  TrainConfig cfg_;
  Pools pools_;
  Adam<T> adam_;
  targets::SnrLabelState labels_;
  std::size_t step_ = 0;
  std::vector<double> val_history_;
  std::vector<dsp::Mixture> val_set_;
};

// Mixture seeds: training batches and the validation set draw from disjoint
// streams of the run seed.
std::uint64_t mix_seed(std::uint64_t run_seed, std::uint64_t stream, std::uint64_t index);

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace dccrn::train
