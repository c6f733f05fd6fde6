#include "dcl/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dcl/error.hpp"
#include "dcl/text.hpp"

namespace dcl {

namespace {

constexpr double kSumTol = 1e-12;

void check_class(const MixtureSpec& spec, int c) {
  if (c < 0 || static_cast<std::size_t>(c) >= spec.num_classes())
    fail(ErrorCode::kInvalidArgument, "invalid class id " + std::to_string(c));
}

std::vector<double> class_features(const MixtureSpec& spec, int c, int template_id, Rng& rng,
                                   int& point_index) {
  const auto uc = static_cast<std::size_t>(c);
  if (spec.mode == SimMode::kDiscrete) {
    point_index = static_cast<int>(rng.categorical(spec.pmfs[uc]));
    return spec.alphabet[static_cast<std::size_t>(point_index)];
  }
  const auto& g = spec.gaussians[uc];
  const std::vector<double>* offset = nullptr;
  if (template_id >= 0) {
    const auto& t = spec.templates[uc][static_cast<std::size_t>(template_id)];
    if (!t.feature_offset.empty()) offset = &t.feature_offset;
  }
  std::vector<double> x(g.mean.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double mu = g.mean[i];
    if (offset) mu += (*offset)[i];
    x[i] = mu + g.stddev * rng.normal();
  }
  return x;
}

}  // namespace

ClassDistribution::ClassDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) fail(ErrorCode::kConfig, "class distribution is empty");
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) fail(ErrorCode::kConfig, "class probabilities must be finite and >= 0");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTol)
    fail(ErrorCode::kConfig, "class probabilities sum to " + std::to_string(sum) + ", expected 1");
  rho_min_ = *std::min_element(probs_.begin(), probs_.end());
}

std::size_t MixtureSpec::dim() const {
  if (mode == SimMode::kDiscrete) return alphabet.empty() ? 0 : alphabet.front().size();
  return gaussians.empty() ? 0 : gaussians.front().mean.size();
}

void MixtureSpec::validate() const {
  const std::size_t k = num_classes();
  if (k == 0) fail(ErrorCode::kConfig, "mixture has no classes");
  if (templates.size() != k) fail(ErrorCode::kConfig, "every class needs a template list");
  if (vocab_size <= 0) fail(ErrorCode::kConfig, "vocab_size must be positive");
  if (!(perturb_prob >= 0.0 && perturb_prob <= 1.0)) fail(ErrorCode::kConfig, "perturb_prob must lie in [0,1]");
  const std::size_t d = dim();
  if (d == 0) fail(ErrorCode::kConfig, "feature dimension is zero");

  for (std::size_t c = 0; c < k; ++c) {
    if (templates[c].empty()) fail(ErrorCode::kConfig, "class " + std::to_string(c) + " has no template");
    for (const auto& t : templates[c]) {
      if (t.tokens.empty()) fail(ErrorCode::kConfig, "empty template in class " + std::to_string(c));
      for (int tok : t.tokens)
        if (tok < 0 || tok >= vocab_size) fail(ErrorCode::kConfig, "template token out of vocabulary");
      if (!(t.weight > 0.0)) fail(ErrorCode::kConfig, "template weights must be positive");
      if (!t.feature_offset.empty() && t.feature_offset.size() != d)
        fail(ErrorCode::kConfig, "template feature_offset has wrong dimension");
    }
  }

  if (mode == SimMode::kContinuous) {
    if (gaussians.size() != k) fail(ErrorCode::kConfig, "need one gaussian conditional per class");
    for (const auto& g : gaussians) {
      if (g.mean.size() != d) fail(ErrorCode::kConfig, "gaussian means differ in dimension");
      if (!(g.stddev >= 0.0)) fail(ErrorCode::kConfig, "gaussian stddev must be >= 0");
    }
  } else {
    if (alphabet.empty() || alphabet.size() > kMaxAlphabet)
      fail(ErrorCode::kConfig, "discrete alphabet must hold 1.." + std::to_string(kMaxAlphabet) + " points");
    for (const auto& pt : alphabet)
      if (pt.size() != d) fail(ErrorCode::kConfig, "alphabet points differ in dimension");
    if (pmfs.size() != k) fail(ErrorCode::kConfig, "need one pmf per class");
    for (std::size_t c = 0; c < k; ++c) {
      if (pmfs[c].size() != alphabet.size()) fail(ErrorCode::kConfig, "pmf length must match alphabet");
      double s = 0.0;
      for (double p : pmfs[c]) {
        if (!(p >= 0.0)) fail(ErrorCode::kConfig, "pmf entries must be >= 0");
        s += p;
      }
      if (std::abs(s - 1.0) > kSumTol)
        fail(ErrorCode::kConfig, "pmf of class " + std::to_string(c) + " does not sum to 1");
    }
  }
}

int sample_class(const ClassDistribution& dist, Rng& rng) {
  return static_cast<int>(rng.categorical(dist.probs()));
}

DataPoint sample_conditional(const MixtureSpec& spec, int c, Rng& rng) {
  check_class(spec, c);
  DataPoint p;
  p.latent_class = c;
  auto [tid, tokens] = generate_report_with_template(spec, c, rng);
  p.template_id = tid;
  p.tokens = std::move(tokens);
  p.features = class_features(spec, c, tid, rng, p.point_index);
  return p;
}

DataPoint sample_marginal(const MixtureSpec& spec, Rng& rng) {
  return sample_conditional(spec, sample_class(spec.class_dist, rng), rng);
}

DataPoint sample_true_negative(const MixtureSpec& spec, int c, Rng& rng) {
  check_class(spec, c);
  const double rc = spec.class_dist[static_cast<std::size_t>(c)];
  if (!(rc < 1.0)) fail(ErrorCode::kInvalidArgument, "class has all prior mass; no negative class exists");
  std::vector<double> probs = spec.class_dist.probs();
  probs[static_cast<std::size_t>(c)] = 0.0;
  return sample_conditional(spec, static_cast<int>(rng.categorical(probs)), rng);
}

PairSample sample_pair_batch(const MixtureSpec& spec, std::size_t n_neg, Rng& rng, bool cross_modal) {
  require(n_neg >= 1, "sample_pair_batch needs at least one negative");
  PairSample out;
  out.anchor = sample_marginal(spec, rng);
  if (cross_modal) {
    out.positive = out.anchor;
    out.positive.tokens.reset();
    out.anchor.features.clear();
  } else {
    out.positive = sample_conditional(spec, out.anchor.latent_class, rng);
  }
  out.negatives.reserve(n_neg);
  for (std::size_t i = 0; i < n_neg; ++i) out.negatives.push_back(sample_marginal(spec, rng));
  return out;
}

Pmf marginal_pmf(const MixtureSpec& spec) {
  if (spec.mode != SimMode::kDiscrete) fail(ErrorCode::kInvalidArgument, "exact pmfs need discrete mode");
  Pmf p(spec.alphabet.size(), 0.0);
  for (std::size_t c = 0; c < spec.num_classes(); ++c)
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += spec.class_dist[c] * spec.pmfs[c][i];
  return p;
}

Pmf true_negative_pmf(const MixtureSpec& spec, int c) {
  if (spec.mode != SimMode::kDiscrete) fail(ErrorCode::kInvalidArgument, "exact pmfs need discrete mode");
  check_class(spec, c);
  const double rc = spec.class_dist[static_cast<std::size_t>(c)];
  if (!(rc < 1.0)) fail(ErrorCode::kInvalidArgument, "class has all prior mass; E_c undefined");
  Pmf p(spec.alphabet.size(), 0.0);
  for (std::size_t k = 0; k < spec.num_classes(); ++k) {
    if (static_cast<int>(k) == c) continue;
    const double w = spec.class_dist[k] / (1.0 - rc);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += w * spec.pmfs[k][i];
  }
  return p;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  require(p.size() == q.size(), "total_variation: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

double decomposition_residual(const MixtureSpec& spec, int c) {
  const Pmf e = true_negative_pmf(spec, c);
  return decomposition_residual(spec, c, e);
}

double decomposition_residual(const MixtureSpec& spec, int c, std::span<const double> e_c) {
  if (spec.mode != SimMode::kDiscrete)
    fail(ErrorCode::kInvalidArgument, "decomposition_residual needs discrete mode (enumeration)");
  check_class(spec, c);
  const auto uc = static_cast<std::size_t>(c);
  const double rc = spec.class_dist[uc];
  const Pmf d = marginal_pmf(spec);
  require(e_c.size() == d.size(), "E_c has wrong support size");
  Pmf mix(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) mix[i] = rc * spec.pmfs[uc][i] + (1.0 - rc) * e_c[i];
  // Measured on the E_c scale so a perturbation of E_c reads back unshrunk.
  const double tv = total_variation(d, mix);
  return rc < 1.0 ? tv / (1.0 - rc) : tv;
}

MixtureSpec subsample_classes(const MixtureSpec& spec, const std::set<int>& selected, double r) {
  if (selected.empty()) fail(ErrorCode::kInvalidArgument, "subsample_classes: empty selection");
  if (!(r > 0.0 && r <= 1.0)) fail(ErrorCode::kInvalidArgument, "subsample_classes: r must lie in (0,1]");
  std::vector<double> w = spec.class_dist.probs();
  for (int c : selected) {
    check_class(spec, c);
    w[static_cast<std::size_t>(c)] *= r;
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= total;
  // Absorb rounding so the prior sums to one within the invariant's tolerance.
  const double drift = std::accumulate(w.begin(), w.end(), 0.0) - 1.0;
  *std::max_element(w.begin(), w.end()) -= drift;
  MixtureSpec out = spec;
  out.class_dist = ClassDistribution(std::move(w));
  return out;
}

// --- JSON -----------------------------------------------------------------

void to_json(nlohmann::json& j, const MixtureSpec& spec) {
  j = nlohmann::json::object();
  j["mode"] = spec.mode == SimMode::kDiscrete ? "discrete" : "continuous";
  j["class_probs"] = spec.class_dist.probs();
  j["vocab_size"] = spec.vocab_size;
  j["perturb_prob"] = spec.perturb_prob;
  if (spec.mode == SimMode::kDiscrete) j["alphabet"] = spec.alphabet;
  auto classes = nlohmann::json::array();
  for (std::size_t c = 0; c < spec.num_classes(); ++c) {
    nlohmann::json cj;
    if (spec.mode == SimMode::kDiscrete) {
      cj["pmf"] = spec.pmfs[c];
    } else {
      cj["gaussian"] = {{"mean", spec.gaussians[c].mean}, {"stddev", spec.gaussians[c].stddev}};
    }
    auto tj = nlohmann::json::array();
    for (const auto& t : spec.templates[c]) {
      nlohmann::json one = {{"tokens", t.tokens}, {"weight", t.weight}};
      if (!t.feature_offset.empty()) one["feature_offset"] = t.feature_offset;
      tj.push_back(std::move(one));
    }
    cj["templates"] = std::move(tj);
    classes.push_back(std::move(cj));
  }
  j["classes"] = std::move(classes);
}

void from_json(const nlohmann::json& j, MixtureSpec& spec) {
  try {
    MixtureSpec s;
    const std::string mode = j.value("mode", "continuous");
    if (mode == "discrete") {
      s.mode = SimMode::kDiscrete;
    } else if (mode == "continuous") {
      s.mode = SimMode::kContinuous;
    } else {
      fail(ErrorCode::kConfig, "unknown mixture mode '" + mode + "'");
    }
    s.class_dist = ClassDistribution(j.at("class_probs").get<std::vector<double>>());
    s.vocab_size = j.at("vocab_size").get<int>();
    s.perturb_prob = j.value("perturb_prob", 0.0);
    if (s.mode == SimMode::kDiscrete) s.alphabet = j.at("alphabet").get<std::vector<std::vector<double>>>();
    for (const auto& cj : j.at("classes")) {
      if (s.mode == SimMode::kDiscrete) {
        s.pmfs.push_back(cj.at("pmf").get<Pmf>());
      } else {
        const auto& g = cj.at("gaussian");
        s.gaussians.push_back({g.at("mean").get<std::vector<double>>(), g.at("stddev").get<double>()});
      }
      std::vector<ReportTemplate> ts;
      for (const auto& tj : cj.at("templates")) {
        ReportTemplate t;
        t.tokens = tj.at("tokens").get<TokenSeq>();
        t.weight = tj.value("weight", 1.0);
        if (tj.contains("feature_offset")) t.feature_offset = tj.at("feature_offset").get<std::vector<double>>();
        ts.push_back(std::move(t));
      }
      s.templates.push_back(std::move(ts));
    }
    if (s.templates.size() != s.num_classes())
      fail(ErrorCode::kConfig, "number of class entries does not match class_probs");
    s.validate();
    spec = std::move(s);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("malformed mixture spec: ") + e.what());
  }
}

}  // namespace dcl
