#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dcl/encoder.hpp"
#include "dcl/mixture.hpp"

namespace dcl {

enum class Objective { kContrastive, kDebiased };

std::string to_string(Objective o);
Objective objective_from_string(const std::string& s);

/// Scores feeding one anchor's loss. Spans are non-owning.
struct EstimatorInputs {
  double pos_score = 0.0;                 // s(x, x+)
  std::span<const double> neg_scores;     // s(x, u_n), n = 1..N
  std::span<const double> neg_weights;    // optional, same length as neg_scores; empty means all ones
  std::span<const double> pos_set_scores; // s(x, v_m), m = 1..M
  double eta = 0.0;
  double gamma = 1.0;
};

/// -log[e^{s+} / (e^{s+} + sum_n w_n e^{s_n})]. Throws when N = 0.
double contrastive_loss(const EstimatorInputs& in);

/// Unclamped estimate of E_{x- ~ E_c}[e^{s(x,x-)}]:
/// (1/(1-eta)) mean_n w_n e^{s_n} - (eta/(1-eta)) mean_m e^{s_m}.
double g_raw(const EstimatorInputs& in);
/// g_raw clamped from below at e^{-gamma^2}.
double g_estimate(const EstimatorInputs& in);
/// -log[e^{s+} / (e^{s+} + N g_estimate)].
double debiased_loss(const EstimatorInputs& in);

/// Loss value plus its partial derivatives with respect to every score,
/// negative weight, eta, and gamma (through the clamp floor only).
/// A clamped estimator contributes no score gradient.
struct ScoreGradients {
  double loss = 0.0;
  double d_pos = 0.0;
  std::vector<double> d_neg;
  std::vector<double> d_neg_weight;
  std::vector<double> d_pos_set;
  double d_eta = 0.0;
  double d_gamma = 0.0;
  bool clamped = false;
};

void loss_with_gradients(Objective objective, const EstimatorInputs& in, ScoreGradients& out);

// --- false-negative handling baselines ---------------------------------------

enum class HandlingKind { kNone, kRemoveBySim, kReweightBySim, kResampleBySim, kRemoveByLabel };

struct NegativeHandling {
  HandlingKind kind = HandlingKind::kNone;
  double threshold = std::numeric_limits<double>::infinity();  // remove_by_sim
  double temperature = 1.0;                                      // reweight_by_sim
  std::size_t keep_count = 1;                                    // resample_by_sim
  void validate() const;
};

std::string to_string(HandlingKind k);
HandlingKind handling_from_string(const std::string& s);

struct HandledNegatives {
  std::vector<std::size_t> kept;  // indices into the candidate negatives, ascending
  std::vector<double> weights;    // aligned with `kept`; empty unless reweighting
  bool fallback = false;          // every candidate was removed; least-similar one kept
};

/// `pos_neg_sims[n]` is similarity(positive, negative_n).
HandledNegatives apply_negative_handling(const NegativeHandling& strategy, std::span<const double> pos_neg_sims,
                                         std::span<const int> neg_labels, int anchor_label);
/// Embedding-level form: computes similarity(positive, negative_n) first.
HandledNegatives apply_negative_handling(const NegativeHandling& strategy, const Embedding& anchor,
                                         const Embedding& positive, std::span<const Embedding> negatives,
                                         std::span<const int> neg_labels, int anchor_label);

// --- batched in-batch-negative loss -------------------------------------------

struct BatchLossConfig {
  Objective objective = Objective::kDebiased;
  NegativeHandling handling;
  std::size_t num_negatives = 0;  // 0 means every other item in the batch
  bool symmetrize = false;
};

/// Embeddings are columns. For anchor i the negatives are positives j != i,
/// taken in cyclic order i+1, i+2, ...; the positive set is either the
/// positive itself or `extra_positives` columns [i*M, (i+1)*M).
struct BatchInputs {
  const Eigen::MatrixXd* anchors = nullptr;
  const Eigen::MatrixXd* positives = nullptr;
  const Eigen::MatrixXd* extra_positives = nullptr;
  std::size_t num_extra = 0;  // M when extra_positives is set
  std::span<const double> eta;
  std::span<const int> labels;
  double gamma = 1.0;
};

struct BatchLossResult {
  double loss = 0.0;
  Eigen::MatrixXd d_anchors;
  Eigen::MatrixXd d_positives;
  Eigen::MatrixXd d_extra;
  double d_gamma = 0.0;
  double clamp_fraction = 0.0;
  std::size_t fallback_events = 0;
};

BatchLossResult batch_loss(const BatchLossConfig& config, const BatchInputs& in);

// --- asymptotic (true-negative) loss -----------------------------------------

/// Embeddings of every discrete alphabet point, as columns.
Eigen::MatrixXd embed_alphabet(const MixtureSpec& spec, const EncoderParams& params);

/// Exact E_{(x,x+)}[-log(e^{s}/(e^{s} + N E_{x- ~ E_c}[e^{s(x,x-)}]))] by
/// enumeration over a discrete spec. `embeddings` holds one column per
/// alphabet point. Requires at least two classes with positive mass.
double asymptotic_loss_exact(const MixtureSpec& spec, const Eigen::MatrixXd& embeddings, double n);
double asymptotic_loss(const MixtureSpec& spec, const EncoderParams& params, double n);
/// Monte Carlo estimate for continuous specs: `outer` anchor/positive pairs,
/// each with `inner` true-negative draws.
double asymptotic_loss_mc(const MixtureSpec& spec, const EncoderParams& params, double n, std::size_t outer,
                          std::size_t inner, Rng& rng);

}  // namespace dcl
