#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcl/eval.hpp"
#include "dcl/scenarios.hpp"
#include "dcl/train.hpp"

namespace dcl {

using ProgressFn = std::function<void(const std::string&)>;

// --- subsampled Gaussian-mixture image analog ----------------------------------

/// Variant names: "CL", "DCL-eta_True", "DCL-eta_Low" (constant 0.2/(1+r),
/// the prior of a kept class) and "DCL-eta_High" (constant 0.2r/(1+r), the
/// prior of a subsampled class). The two constants follow the 10-class,
/// 5-subsampled layout.
GaussianAnalogConfig cifar_default_data();
TrainConfig cifar_default_train();

struct CifarAnalogConfig {
  GaussianAnalogConfig data = cifar_default_data();
  TrainConfig train = cifar_default_train();
  std::vector<double> r_grid{0.05, 0.1, 0.25, 0.5, 0.75, 0.9};
  std::vector<double> label_fractions{0.01, 0.1, 1.0};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<std::string> variants{"CL", "DCL-eta_True", "DCL-eta_Low", "DCL-eta_High"};
  std::size_t probe_pool = 20000;  // drawn with a uniform class prior
  std::size_t test_size = 5000;
  ProbeOptions probe;
};

void to_json(nlohmann::json& j, const CifarAnalogConfig& c);
void from_json(const nlohmann::json& j, CifarAnalogConfig& c);

struct CifarRow {
  double r = 0.0;
  std::string variant;
  std::uint64_t seed = 0;
  double label_fraction = 0.0;
  double accuracy = 0.0;
  double mean_classifier_accuracy = 0.0;
};

/// One training run (r, variant, seed), probed at every label fraction.
std::vector<CifarRow> run_cifar_cell(const CifarAnalogConfig& config, double r, const std::string& variant,
                                     std::uint64_t seed);
std::vector<CifarRow> run_cifar_analog(const CifarAnalogConfig& config, const ProgressFn& progress = {});

// --- long-tailed cross-modal toy -------------------------------------------------------

struct LmEtaConfig {
  double a = 0.2;
  double k = 0.35;
  double alpha = 0.1;
  bool length_normalize = false;
  std::size_t corpus_size = 20000;  // reports drawn from the data to fit the bigram model
};

CrossModalConfig cross_modal_default_data();
TrainConfig cross_modal_default_train();
LmEtaConfig cross_modal_default_lm();

struct CrossModalExperimentConfig {
  CrossModalConfig data = cross_modal_default_data();
  TrainConfig train = cross_modal_default_train();
  std::vector<double> eta_grid{0.01, 0.05, 0.1, 0.2};
  bool include_lm = true;
  LmEtaConfig lm = cross_modal_default_lm();
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::size_t eval_size = 2000;        // paired records in the retrieval set
  std::size_t prompt_per_side = 1000;  // positives and negatives per head class
  std::vector<int> ks{10, 50, 100};
};

void to_json(nlohmann::json& j, const CrossModalExperimentConfig& c);
void from_json(const nlohmann::json& j, CrossModalExperimentConfig& c);

struct CrossModalRow {
  std::string variant;  // "eta=<value>" or "eta_LM"
  double eta = 0.0;     // NaN for eta_LM
  std::uint64_t seed = 0;
  double head_prompt_accuracy = 0.0;
  double tail_avg_recall = 0.0;
  double all_avg_recall = 0.0;
  double medr = 0.0;
};

/// Fits the bigram model on reports drawn from the data with a fixed seed.
NGramLM fit_report_lm(const MixtureSpec& spec, const LmEtaConfig& lm);

CrossModalRow run_cross_modal_cell(const CrossModalExperimentConfig& config, const MixtureSpec& spec,
                                   const EtaProvider& eta, const std::string& variant, double eta_value,
                                   std::uint64_t seed);
std::vector<CrossModalRow> run_cross_modal(const CrossModalExperimentConfig& config, const ProgressFn& progress = {});

}  // namespace dcl
