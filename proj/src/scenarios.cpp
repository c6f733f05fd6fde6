#include "dcl/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dcl/error.hpp"

namespace dcl {

namespace {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

std::vector<double> gaussian_vector(Rng& rng, int dim, double scale) {
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

}  // namespace

void to_json(nlohmann::json& j, const GaussianAnalogConfig& c) {
  j = {{"num_classes", c.num_classes}, {"dim", c.dim},       {"num_subsampled", c.num_subsampled},
       {"r", c.r},                     {"mean_scale", c.mean_scale}, {"stddev", c.stddev},
       {"geometry_seed", c.geometry_seed}};
}

void from_json(const nlohmann::json& j, GaussianAnalogConfig& c) {
  read_opt(j, "num_classes", c.num_classes);
  read_opt(j, "dim", c.dim);
  read_opt(j, "num_subsampled", c.num_subsampled);
  read_opt(j, "r", c.r);
  read_opt(j, "mean_scale", c.mean_scale);
  read_opt(j, "stddev", c.stddev);
  read_opt(j, "geometry_seed", c.geometry_seed);
}

MixtureSpec gaussian_analog_spec(const GaussianAnalogConfig& cfg) {
  if (cfg.num_classes < 2 || cfg.dim < 1) fail(ErrorCode::kConfig, "analog needs >= 2 classes and dim >= 1");
  if (cfg.num_subsampled < 0 || cfg.num_subsampled > cfg.num_classes)
    fail(ErrorCode::kConfig, "num_subsampled must lie in [0, num_classes]");
  if (!(cfg.r > 0.0 && cfg.r <= 1.0)) fail(ErrorCode::kConfig, "subsampling ratio r must lie in (0, 1]");
  MixtureSpec spec;
  spec.mode = SimMode::kContinuous;
  spec.vocab_size = cfg.num_classes;
  Rng rng(cfg.geometry_seed);
  const double per_coord = cfg.mean_scale / std::sqrt(static_cast<double>(cfg.dim));
  std::vector<double> prior(static_cast<std::size_t>(cfg.num_classes), 1.0 / cfg.num_classes);
  std::set<int> selected;
  for (int c = 0; c < cfg.num_classes; ++c) {
    spec.gaussians.push_back({gaussian_vector(rng, cfg.dim, per_coord), cfg.stddev});
    spec.templates.push_back({ReportTemplate{{c}, 1.0, {}}});
    if (c >= cfg.num_classes - cfg.num_subsampled) selected.insert(c);
  }
  spec.class_dist = ClassDistribution(prior);
  spec.validate();
  return selected.empty() ? spec : subsample_classes(spec, selected, cfg.r);
}

void to_json(nlohmann::json& j, const CrossModalConfig& c) {
  j = {{"num_head", c.num_head},
       {"head_prob", c.head_prob},
       {"num_tail", c.num_tail},
       {"dim", c.dim},
       {"mean_scale", c.mean_scale},
       {"stddev", c.stddev},
       {"templates_per_class", c.templates_per_class},
       {"offset_scale", c.offset_scale},
       {"filler_tokens", c.filler_tokens},
       {"filler_length", c.filler_length},
       {"perturb_prob", c.perturb_prob},
       {"geometry_seed", c.geometry_seed}};
}

void from_json(const nlohmann::json& j, CrossModalConfig& c) {
  read_opt(j, "num_head", c.num_head);
  read_opt(j, "head_prob", c.head_prob);
  read_opt(j, "num_tail", c.num_tail);
  read_opt(j, "dim", c.dim);
  read_opt(j, "mean_scale", c.mean_scale);
  read_opt(j, "stddev", c.stddev);
  read_opt(j, "templates_per_class", c.templates_per_class);
  read_opt(j, "offset_scale", c.offset_scale);
  read_opt(j, "filler_tokens", c.filler_tokens);
  read_opt(j, "filler_length", c.filler_length);
  read_opt(j, "perturb_prob", c.perturb_prob);
  read_opt(j, "geometry_seed", c.geometry_seed);
}

CrossModalVocab cross_modal_vocab(const CrossModalConfig& cfg) {
  return {cfg.filler_tokens, cfg.num_head + cfg.num_tail, cfg.num_head, cfg.templates_per_class};
}

namespace {

TokenSeq filler_run(const CrossModalConfig& cfg, int t) {
  TokenSeq seq;
  for (int i = 0; i < cfg.filler_length; ++i) seq.push_back((i + t) % cfg.filler_tokens);
  return seq;
}

}  // namespace

MixtureSpec cross_modal_spec(const CrossModalConfig& cfg) {
  if (cfg.num_head < 1 || cfg.num_tail < 1) fail(ErrorCode::kConfig, "cross-modal data needs head and tail classes");
  const double tail_mass = 1.0 - cfg.num_head * cfg.head_prob;
  if (!(cfg.head_prob > 0.0) || !(tail_mass > 0.0)) fail(ErrorCode::kConfig, "head_prob leaves no mass for the tail");
  if (cfg.templates_per_class < 1 || cfg.filler_tokens < 1 || cfg.filler_length < 0)
    fail(ErrorCode::kConfig, "templates_per_class and filler_tokens must be >= 1");
  const CrossModalVocab vocab = cross_modal_vocab(cfg);
  const int k = vocab.num_classes;

  MixtureSpec spec;
  spec.mode = SimMode::kContinuous;
  spec.vocab_size = vocab.size();
  spec.perturb_prob = cfg.perturb_prob;
  std::vector<double> prior;
  Rng rng(cfg.geometry_seed);
  const double mean_coord = cfg.mean_scale / std::sqrt(static_cast<double>(cfg.dim));
  const double off_coord = cfg.offset_scale / std::sqrt(static_cast<double>(cfg.dim));
  for (int c = 0; c < k; ++c) {
    prior.push_back(c < cfg.num_head ? cfg.head_prob : tail_mass / cfg.num_tail);
    spec.gaussians.push_back({gaussian_vector(rng, cfg.dim, mean_coord), cfg.stddev});
    std::vector<ReportTemplate> ts;
    for (int t = 0; t < cfg.templates_per_class; ++t) {
      ReportTemplate rt;
      std::vector<int> others;
      for (int h = 0; h < cfg.num_head; ++h)
        if (h != c) others.push_back(h);
      if (!others.empty()) rt.tokens.push_back(vocab.negation_token(others[static_cast<std::size_t>(c + t) % others.size()]));
      const TokenSeq filler = filler_run(cfg, t);
      rt.tokens.insert(rt.tokens.end(), filler.begin(), filler.end());
      rt.tokens.push_back(vocab.finding_token(c));
      rt.tokens.push_back(vocab.detail_token(t));
      rt.feature_offset = gaussian_vector(rng, cfg.dim, off_coord);
      ts.push_back(std::move(rt));
    }
    spec.templates.push_back(std::move(ts));
  }
  spec.class_dist = ClassDistribution(prior);
  spec.validate();
  return spec;
}

PromptPair class_prompts(const CrossModalConfig& cfg, int c, int t) {
  if (c < 0 || c >= cfg.num_head) fail(ErrorCode::kInvalidArgument, "prompts exist for head classes only");
  const CrossModalVocab vocab = cross_modal_vocab(cfg);
  PromptPair p;
  if (t < 0 || t >= cfg.templates_per_class) fail(ErrorCode::kInvalidArgument, "prompt template slot out of range");
  p.positive = filler_run(cfg, t);
  p.negative = {vocab.negation_token(c)};
  p.negative.insert(p.negative.end(), p.positive.begin(), p.positive.end());
  p.positive.push_back(vocab.finding_token(c));
  return p;
}

MixtureSpec random_discrete_spec(const RandomDiscreteConfig& cfg, Rng& rng) {
  require(cfg.min_classes >= 2 && cfg.max_classes >= cfg.min_classes, "random spec: bad class range");
  require(cfg.min_alphabet >= 1 && cfg.max_alphabet >= cfg.min_alphabet &&
              cfg.max_alphabet <= static_cast<int>(kMaxAlphabet),
          "random spec: bad alphabet range");
  const int k = cfg.min_classes + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_classes - cfg.min_classes + 1)));
  const int nx = cfg.min_alphabet + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_alphabet - cfg.min_alphabet + 1)));
  require(k * cfg.rho_lo < 1.0 && k * cfg.rho_hi > 1.0, "random spec: prior range cannot sum to one");

  MixtureSpec spec;
  spec.mode = SimMode::kDiscrete;
  spec.vocab_size = cfg.vocab_size;
  for (int i = 0; i < nx; ++i) spec.alphabet.push_back(gaussian_vector(rng, cfg.dim, 1.0));

  // Skewed priors: normalised powers of exponentials, redrawn until every
  // entry lands inside [rho_lo, rho_hi].
  std::vector<double> prior(static_cast<std::size_t>(k));
  for (int attempt = 0;; ++attempt) {
    if (attempt > 10000) fail(ErrorCode::kInternal, "random spec: could not draw a prior inside the range");
    double z = 0.0;
    for (auto& p : prior) z += p = std::pow(-std::log(rng.uniform_open0()), 1.5);
    for (auto& p : prior) p /= z;
    if (std::all_of(prior.begin(), prior.end(), [&](double p) { return p >= cfg.rho_lo && p <= cfg.rho_hi; })) break;
  }
  spec.class_dist = ClassDistribution(prior);

  for (int c = 0; c < k; ++c) {
    Pmf pmf(static_cast<std::size_t>(nx), 0.0);
    const int support = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::min(nx, 6))));
    double z = 0.0;
    for (int s = 0; s < support; ++s) {
      const auto j = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(nx)));
      const double w = 0.1 + rng.uniform();
      pmf[j] += w;
      z += w;
    }
    for (auto& p : pmf) p /= z;
    spec.pmfs.push_back(std::move(pmf));

    std::vector<ReportTemplate> ts;
    const int nt = 1 + static_cast<int>(rng.below(2));
    for (int t = 0; t < nt; ++t) {
      ReportTemplate rt;
      const int len = 2 + static_cast<int>(rng.below(4));
      for (int i = 0; i < len; ++i) rt.tokens.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.vocab_size))));
      rt.weight = 0.5 + rng.uniform();
      ts.push_back(std::move(rt));
    }
    spec.templates.push_back(std::move(ts));
  }
  spec.validate();
  return spec;
}

}  // namespace dcl
