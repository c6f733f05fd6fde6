#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include <json.hpp>

#include "dcl/rng.hpp"

namespace dcl {

using TokenSeq = std::vector<int>;
using Pmf = std::vector<double>;

/// Prior over latent classes. Entries are nonnegative and sum to one.
class ClassDistribution {
 public:
  ClassDistribution() = default;
  explicit ClassDistribution(std::vector<double> probs);

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t c) const { return probs_.at(c); }
  const std::vector<double>& probs() const noexcept { return probs_; }
  double rho_min() const noexcept { return rho_min_; }

 private:
  std::vector<double> probs_;
  double rho_min_ = 0.0;
};

enum class SimMode { kContinuous, kDiscrete };

struct GaussianConditional {
  std::vector<double> mean;
  double stddev = 1.0;
};

/// One synthetic report shape for a class. `feature_offset`, when non-empty,
/// shifts the paired image features so reports and images share detail
/// beyond the class label.
struct ReportTemplate {
  TokenSeq tokens;
  double weight = 1.0;
  std::vector<double> feature_offset;
};

struct MixtureSpec {
  SimMode mode = SimMode::kContinuous;
  ClassDistribution class_dist;
  std::vector<GaussianConditional> gaussians;  // continuous mode, one per class
  std::vector<std::vector<double>> alphabet;   // discrete mode, shared point set
  std::vector<Pmf> pmfs;                       // discrete mode, one per class over `alphabet`
  std::vector<std::vector<ReportTemplate>> templates;
  int vocab_size = 0;
  double perturb_prob = 0.0;

  std::size_t num_classes() const noexcept { return class_dist.size(); }
  std::size_t dim() const;
  /// Throws dcl::Error(kConfig) describing the first violated invariant.
  void validate() const;
};

struct DataPoint {
  std::vector<double> features;
  std::optional<TokenSeq> tokens;
  int latent_class = -1;
  int template_id = -1;
  int point_index = -1;  // discrete mode only
};

struct PairSample {
  DataPoint anchor;
  DataPoint positive;
  std::vector<DataPoint> negatives;
};

inline constexpr std::size_t kMaxAlphabet = 64;

int sample_class(const ClassDistribution& dist, Rng& rng);
DataPoint sample_conditional(const MixtureSpec& spec, int c, Rng& rng);
DataPoint sample_marginal(const MixtureSpec& spec, Rng& rng);
/// Draw from the class-excluded distribution E_c: pick c' != c with
/// probability rho(c')/(1-rho(c)), then sample its conditional.
DataPoint sample_true_negative(const MixtureSpec& spec, int c, Rng& rng);
/// Anchor/positive share a class; in cross-modal mode the anchor keeps only
/// the report tokens and the positive only the image features of one record.
PairSample sample_pair_batch(const MixtureSpec& spec, std::size_t n_neg, Rng& rng,
                             bool cross_modal = false);

// Exact discrete-mode distributions over the alphabet.
Pmf marginal_pmf(const MixtureSpec& spec);
Pmf true_negative_pmf(const MixtureSpec& spec, int c);
double total_variation(std::span<const double> p, std::span<const double> q);
// TV(D, rho_c D_c + (1 - rho_c) E_c) / (1 - rho_c), i.e. the distance in E_c units.
double decomposition_residual(const MixtureSpec& spec, int c);
/// Same check against a caller-supplied E_c.
double decomposition_residual(const MixtureSpec& spec, int c, std::span<const double> e_c);

/// Reweights the prior: selected classes keep fraction r of their mass, the
/// rest keep all of it, then renormalise. Conditionals are copied unchanged.
MixtureSpec subsample_classes(const MixtureSpec& spec, const std::set<int>& selected, double r);

void to_json(nlohmann::json& j, const MixtureSpec& spec);
void from_json(const nlohmann::json& j, MixtureSpec& spec);

}  // namespace dcl
