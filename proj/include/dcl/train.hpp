#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcl/encoder.hpp"
#include "dcl/eta.hpp"
#include "dcl/mixture.hpp"
#include "dcl/objectives.hpp"
#include "dcl/optim.hpp"

namespace dcl {

enum class TrainMode { kUnimodal, kCrossModal };

struct TrainConfig {
  Objective objective = Objective::kDebiased;
  NegativeHandling handling;
  std::size_t batch_size = 64;
  std::size_t num_negatives = 0;  // N; 0 means batch_size - 1
  std::size_t num_positives = 1;  // M; 1 reuses the positive itself as v_1
  OptimizerConfig optimizer;
  std::size_t epochs = 50;
  std::size_t samples_per_epoch = 4096;
  bool cosine = false;
  std::size_t warmup_steps = 0;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::kUnimodal;
  bool symmetrize = false;
  /// Unimodal only. 0: the positive is a fresh draw from the anchor's class.
  /// > 0: anchor and positive are two views of one draw, each perturbed by
  /// isotropic Gaussian noise of this scale.
  double augment_stddev = 0.0;
  EncoderConfig encoder;

  std::size_t steps_per_epoch() const;
  std::size_t total_steps() const { return epochs * steps_per_epoch(); }
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, TrainConfig& c);

struct TraceRow {
  std::size_t step = 0;
  double loss = 0.0;
  double clamp_fraction = 0.0;
  double mean_eta = 0.0;
};

struct TrainResult {
  EncoderParams params;
  std::vector<TraceRow> trace;  // one row per step
};

/// Stream of the batch drawn at `step`; the NaN diagnostic reports its key.
Rng batch_rng(std::uint64_t seed, std::size_t step);

/// Deterministic given config.seed. Each step draws a fresh batch of
/// batch_size records from the spec. Unimodal: anchor and positive share a
/// class (see augment_stddev). Cross-modal: the anchor is the report and the
/// positive the paired image.
TrainResult train(const MixtureSpec& spec, const TrainConfig& config, const EtaProvider& eta);

}  // namespace dcl
