#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "dcl/encoder.hpp"
#include "dcl/eta.hpp"
#include "dcl/mixture.hpp"
#include "dcl/optim.hpp"
#include "dcl/rng.hpp"

namespace dcl {

/// Which coefficients multiply the three error terms. kProof carries the
/// constants that the derivation actually yields (3e^2 sqrt(pi/2), the same,
/// 3e^2); kStatement the smaller ones quoted with the result (.., 2e^2, 2e^2).
enum class BoundConstants { kProof, kStatement };

struct Prop1Terms {
  double term_n = 0.0;
  double term_m = 0.0;
  double term_eta = 0.0;
  double total = 0.0;
};

/// One anchor configuration of a discrete spec: class, alphabet point and
/// report template, with probability rho(c) D_c(point) w_t.
struct AnchorAtom {
  int cls = 0;
  int point = 0;
  int template_id = 0;
  double weight = 0.0;
  double eta = 0.0;
};

/// Every atom with positive probability; eta is evaluated on the unperturbed
/// template tokens.
std::vector<AnchorAtom> anchor_atoms(const MixtureSpec& spec, const EtaProvider& eta);

Prop1Terms prop1_rhs(const MixtureSpec& spec, const EtaProvider& eta, double n, double m,
                     BoundConstants constants = BoundConstants::kProof);

struct GapOptions {
  std::size_t min_trials = 100;
  std::size_t max_trials = 25600;
  /// Keep doubling the trial count until stderr < rel_stderr * stderr_reference.
  double rel_stderr = 0.05;
  double stderr_reference = 0.0;  // 0 disables the adaptive stage
};

struct GapEstimate {
  double l_tilde = 0.0;            // asymptotic loss, exact
  double l_clamped = 0.0;          // finite-sample loss with g clamped at e^{-1}, MC mean
  double l_clamped_stderr = 0.0;
  double l_unclamped = 0.0;        // NaN when some draw makes the denominator non-positive
  double l_unclamped_stderr = 0.0;
  double gap = 0.0;                // |l_tilde - l_clamped|
  double gap_unclamped = 0.0;
  std::size_t trials = 0;
};

/// Scores are taken from `embeddings` (one column per alphabet point) as-is;
/// the inequality assumes unit norm. Outer expectations are enumerated, only
/// the N marginal and M same-class draws are sampled.
GapEstimate empirical_gap(const MixtureSpec& spec, const Eigen::MatrixXd& embeddings, const EtaProvider& eta,
                          std::size_t n, std::size_t m, const GapOptions& options, Rng& rng);
/// Encoder form: embeddings are divided by gamma first.
GapEstimate empirical_gap(const MixtureSpec& spec, const EncoderParams& params, const EtaProvider& eta,
                          std::size_t n, std::size_t m, const GapOptions& options, Rng& rng);

struct BoundReport {
  std::size_t n = 0, m = 0;
  std::string eta_kind;
  GapEstimate gap;
  Prop1Terms proof;
  Prop1Terms statement;
  double lhs = 0.0;
  double lhs_stderr = 0.0;
  double rhs_total = 0.0;  // proof constants
  bool holds = false;
  bool holds_statement = false;
  bool holds_unclamped = false;  // false also when the unclamped loss is undefined
};

/// Runs the trial count adaptively so the MC stderr drops below 5% of the RHS.
BoundReport verify_prop1(const MixtureSpec& spec, const EncoderParams& params, const EtaProvider& eta,
                         std::size_t n, std::size_t m, Rng& rng, std::size_t min_trials = 100);

void to_json(nlohmann::json& j, const Prop1Terms& t);
void to_json(nlohmann::json& j, const BoundReport& r);

// --- supervised losses ---------------------------------------------------------

/// K-way tasks with p_T proportional to the product of the class priors.
struct Task {
  std::vector<int> classes;
  double prob = 0.0;
};

/// Exact enumeration when C(|C|, K) <= 1e4, otherwise 1e4 sampled tasks
/// (equal weights) drawn with a fixed internal seed.
std::vector<Task> task_distribution(const ClassDistribution& dist, std::size_t k);

double sup_loss_mean_classifier(const MixtureSpec& spec, const Eigen::MatrixXd& embeddings, std::size_t k);
double sup_loss_mean_classifier(const MixtureSpec& spec, const EncoderParams& params, std::size_t k);

struct BestLinearResult {
  double loss = 0.0;
  bool converged = true;
};

/// Per-task softmax regression (no bias) started from the mean classifier.
BestLinearResult sup_loss_best_linear(const MixtureSpec& spec, const Eigen::MatrixXd& embeddings, std::size_t k,
                                      const LbfgsOptions& options = {});
BestLinearResult sup_loss_best_linear(const MixtureSpec& spec, const EncoderParams& params, std::size_t k,
                                      const LbfgsOptions& options = {});

struct SupLossReport {
  double l_sup = 0.0;
  double l_sup_mu = 0.0;
  double l_tilde = 0.0;
  double n_used = 0.0;
  std::size_t k = 0;
  bool converged = true;
  bool holds = false;  // l_sup <= l_sup_mu <= l_tilde within 1e-8
};

/// Smallest N for which the ordering is guaranteed: (1 - rho_min) / rho_min
/// over classes with positive mass.
double lemma_a1_threshold(const ClassDistribution& dist);

/// Throws kInvalidArgument when n is below the threshold. k = 0 means |C|.
SupLossReport lemma_a1_check(const MixtureSpec& spec, const Eigen::MatrixXd& embeddings, double n,
                             std::size_t k = 0);
SupLossReport lemma_a1_check(const MixtureSpec& spec, const EncoderParams& params, double n, std::size_t k = 0);

void to_json(nlohmann::json& j, const SupLossReport& r);

// --- Lipschitz factors -------------------------------------------------------------

struct LipschitzFactors {
  double l_omega = 0.0;
  double l_psi = 0.0;
  double l_ell = 0.0;
  double l_phi = 0.0;
  double b = 0.0;
};

LipschitzFactors lipschitz_factors(double n, double m, double eta_max, double grad_kappa_norm);

}  // namespace dcl
