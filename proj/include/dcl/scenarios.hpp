#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "dcl/mixture.hpp"
#include "dcl/rng.hpp"

namespace dcl {

/// Continuous Gaussian mixture standing in for the subsampled image data set:
/// `num_subsampled` classes (the last ones) keep fraction r of their mass.
struct GaussianAnalogConfig {
  int num_classes = 10;
  int dim = 16;
  int num_subsampled = 5;
  double r = 0.1;
  double mean_scale = 1.0;  // class means ~ N(0, mean_scale^2 / dim) per coordinate
  double stddev = 1.0;
  std::uint64_t geometry_seed = 7;
};

void to_json(nlohmann::json& j, const GaussianAnalogConfig& c);
void from_json(const nlohmann::json& j, GaussianAnalogConfig& c);

MixtureSpec gaussian_analog_spec(const GaussianAnalogConfig& config);

/// Long-tailed paired image/report data. Vocabulary layout:
///   [0, filler)                     filler words shared by every report
///   finding_token(c)                one per class
///   negation_token(c)               "no <finding c>", one per head class
///   detail_token(t)                 one per template slot, shared by classes
/// A report reads: one negation, filler run, finding, detail. The negated
/// head class is picked by (class + template) among the heads other than
/// the report's own, so across the tail each template negates every head
/// equally often. Apart from the finding, each token's masked likelihood
/// is then the same for every class; the finding's tracks the class
/// frequency. Each template shifts the image mean by its own offset so
/// reports carry detail beyond the class label.
struct CrossModalConfig {
  int num_head = 2;
  double head_prob = 0.25;
  int num_tail = 8;
  int dim = 16;
  double mean_scale = 3.0;
  double stddev = 1.0;
  int templates_per_class = 4;
  double offset_scale = 1.5;
  int filler_tokens = 6;
  int filler_length = 4;
  double perturb_prob = 0.1;
  std::uint64_t geometry_seed = 11;
};

void to_json(nlohmann::json& j, const CrossModalConfig& c);
void from_json(const nlohmann::json& j, CrossModalConfig& c);

struct CrossModalVocab {
  int filler = 0, num_classes = 0, num_head = 0, templates = 0;
  int finding_token(int c) const { return filler + c; }
  int negation_token(int c) const { return filler + num_classes + c; }
  int detail_token(int t) const { return filler + num_classes + num_head + t; }
  int size() const { return filler + num_classes + num_head + templates; }
};

CrossModalVocab cross_modal_vocab(const CrossModalConfig& config);
MixtureSpec cross_modal_spec(const CrossModalConfig& config);

/// Prompt pair for class c built on template slot t's filler: a positive
/// ("filler..., finding c") and a negative ("no finding c, filler...")
/// sentence. Head classes only.
struct PromptPair {
  TokenSeq positive;
  TokenSeq negative;
};
PromptPair class_prompts(const CrossModalConfig& config, int c, int t = 0);

/// Random discrete spec for bound checks: priors inside [rho_lo, rho_hi],
/// sparse random pmfs, 1-2 report templates per class.
struct RandomDiscreteConfig {
  int min_classes = 2;
  int max_classes = 8;
  int min_alphabet = 4;
  int max_alphabet = 32;
  int dim = 4;
  int vocab_size = 12;
  double rho_lo = 0.02;
  double rho_hi = 0.9;
};

MixtureSpec random_discrete_spec(const RandomDiscreteConfig& config, Rng& rng);

}  // namespace dcl
