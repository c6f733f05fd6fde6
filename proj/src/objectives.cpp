#include "dcl/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dcl/error.hpp"

namespace dcl {

namespace {

double weight_at(const EstimatorInputs& in, std::size_t n) {
  return in.neg_weights.empty() ? 1.0 : in.neg_weights[n];
}

void check_inputs(const EstimatorInputs& in, bool need_pos_set) {
  if (in.neg_scores.empty()) fail(ErrorCode::kInvalidArgument, "contrastive objectives need N >= 1 negatives");
  if (!in.neg_weights.empty() && in.neg_weights.size() != in.neg_scores.size())
    fail(ErrorCode::kInvalidArgument, "negative weights must align with negative scores");
  if (need_pos_set) {
    if (in.pos_set_scores.empty()) fail(ErrorCode::kInvalidArgument, "debiased estimator needs M >= 1 positives");
    if (!(in.eta >= 0.0 && in.eta < 1.0)) fail(ErrorCode::kInvalidArgument, "eta must lie in [0, 1)");
  }
}

double max_score(const EstimatorInputs& in) {
  double m = in.pos_score;
  for (double s : in.neg_scores) m = std::max(m, s);
  return m;
}

// (1/N) sum_n w_n e^{s_n - shift}
double shifted_neg_mean(const EstimatorInputs& in, double shift) {
  double s = 0.0;
  for (std::size_t n = 0; n < in.neg_scores.size(); ++n) s += weight_at(in, n) * std::exp(in.neg_scores[n] - shift);
  return s / static_cast<double>(in.neg_scores.size());
}

double shifted_pos_mean(const EstimatorInputs& in, double shift) {
  double s = 0.0;
  for (double v : in.pos_set_scores) s += std::exp(v - shift);
  return s / static_cast<double>(in.pos_set_scores.size());
}

double shifted_g0(const EstimatorInputs& in, double a, double b) {
  return (1.0 / (1.0 - in.eta)) * a - (in.eta / (1.0 - in.eta)) * b;
}

// Shared tail of both losses so eta = 0 reproduces the contrastive loss bit for bit.
double finish_loss(double pos_score, double shift, double n, double g_shifted, double& z_out) {
  const double z = std::exp(pos_score - shift) + n * g_shifted;
  z_out = z;
  const double loss = std::log(z) + shift - pos_score;
  if (!std::isfinite(loss)) fail(ErrorCode::kNumeric, "non-finite contrastive loss");
  return loss;
}

}  // namespace

std::string to_string(Objective o) { return o == Objective::kContrastive ? "CL" : "DCL"; }

Objective objective_from_string(const std::string& s) {
  if (s == "CL" || s == "cl" || s == "contrastive") return Objective::kContrastive;
  if (s == "DCL" || s == "dcl" || s == "debiased") return Objective::kDebiased;
  fail(ErrorCode::kConfig, "unknown objective '" + s + "'");
}

double contrastive_loss(const EstimatorInputs& in) {
  check_inputs(in, false);
  const double shift = max_score(in);
  const double a = shifted_neg_mean(in, shift);
  double z = 0.0;
  return finish_loss(in.pos_score, shift, static_cast<double>(in.neg_scores.size()), a, z);
}

double g_raw(const EstimatorInputs& in) {
  check_inputs(in, true);
  return shifted_g0(in, shifted_neg_mean(in, 0.0), shifted_pos_mean(in, 0.0));
}

double g_estimate(const EstimatorInputs& in) {
  return std::max(g_raw(in), std::exp(-in.gamma * in.gamma));
}

double debiased_loss(const EstimatorInputs& in) {
  ScoreGradients g;
  loss_with_gradients(Objective::kDebiased, in, g);
  return g.loss;
}

void loss_with_gradients(Objective objective, const EstimatorInputs& in, ScoreGradients& out) {
  const bool debiased = objective == Objective::kDebiased;
  check_inputs(in, debiased);
  const std::size_t n_neg = in.neg_scores.size();
  const auto n = static_cast<double>(n_neg);
  const double shift = max_score(in);
  const double a = shifted_neg_mean(in, shift);

  out.d_neg.assign(n_neg, 0.0);
  out.d_neg_weight.assign(n_neg, 0.0);
  out.d_pos_set.assign(in.pos_set_scores.size(), 0.0);
  out.d_eta = 0.0;
  out.d_gamma = 0.0;
  out.clamped = false;

  double z = 0.0;
  if (!debiased) {
    out.loss = finish_loss(in.pos_score, shift, n, a, z);
    for (std::size_t k = 0; k < n_neg; ++k) {
      const double e = std::exp(in.neg_scores[k] - shift);
      out.d_neg[k] = weight_at(in, k) * e / z;
      out.d_neg_weight[k] = e / z;
    }
    out.d_pos = std::exp(in.pos_score - shift) / z - 1.0;
    return;
  }

  const double b = shifted_pos_mean(in, shift);
  const double g0 = shifted_g0(in, a, b);
  const double floor = std::exp(-in.gamma * in.gamma - shift);
  const bool clamped = g0 < floor;
  out.clamped = clamped;
  out.loss = finish_loss(in.pos_score, shift, n, clamped ? floor : g0, z);
  out.d_pos = std::exp(in.pos_score - shift) / z - 1.0;
  if (clamped) {
    out.d_gamma = -2.0 * in.gamma * n * floor / z;
    return;
  }
  const double inv1m = 1.0 / (1.0 - in.eta);
  for (std::size_t k = 0; k < n_neg; ++k) {
    const double e = std::exp(in.neg_scores[k] - shift);
    out.d_neg[k] = weight_at(in, k) * e * inv1m / z;
    out.d_neg_weight[k] = e * inv1m / z;
  }
  const auto m = static_cast<double>(in.pos_set_scores.size());
  for (std::size_t k = 0; k < in.pos_set_scores.size(); ++k)
    out.d_pos_set[k] = -n * in.eta * std::exp(in.pos_set_scores[k] - shift) * inv1m / (m * z);
  out.d_eta = n * (a - b) * inv1m * inv1m / z;
}

// --- negative handling ------------------------------------------------------

std::string to_string(HandlingKind k) {
  switch (k) {
    case HandlingKind::kNone: return "none";
    case HandlingKind::kRemoveBySim: return "remove_by_sim";
    case HandlingKind::kReweightBySim: return "reweight_by_sim";
    case HandlingKind::kResampleBySim: return "resample_by_sim";
    case HandlingKind::kRemoveByLabel: return "remove_by_label";
  }
  return "none";
}

HandlingKind handling_from_string(const std::string& s) {
  for (auto k : {HandlingKind::kNone, HandlingKind::kRemoveBySim, HandlingKind::kReweightBySim,
                 HandlingKind::kResampleBySim, HandlingKind::kRemoveByLabel})
    if (s == to_string(k)) return k;
  fail(ErrorCode::kConfig, "unknown negative handling '" + s + "'");
}

void NegativeHandling::validate() const {
  if (kind == HandlingKind::kRemoveBySim && std::isnan(threshold))
    fail(ErrorCode::kConfig, "remove_by_sim threshold must not be NaN");
  if (kind == HandlingKind::kReweightBySim && !(temperature > 0.0 && std::isfinite(temperature)))
    fail(ErrorCode::kConfig, "reweight_by_sim temperature must be positive");
  if (kind == HandlingKind::kResampleBySim && keep_count < 1)
    fail(ErrorCode::kConfig, "resample_by_sim keep_count must be >= 1");
}

HandledNegatives apply_negative_handling(const NegativeHandling& strategy, std::span<const double> sims,
                                         std::span<const int> labels, int anchor_label) {
  strategy.validate();
  const std::size_t n = sims.size();
  require(n >= 1, "negative handling needs at least one candidate");
  HandledNegatives out;
  switch (strategy.kind) {
    case HandlingKind::kNone:
      out.kept.resize(n);
      std::iota(out.kept.begin(), out.kept.end(), 0);
      break;
    case HandlingKind::kRemoveBySim:
      for (std::size_t i = 0; i < n; ++i)
        if (!(sims[i] > strategy.threshold)) out.kept.push_back(i);
      break;
    case HandlingKind::kRemoveByLabel:
      require(labels.size() == n, "remove_by_label needs one label per negative");
      for (std::size_t i = 0; i < n; ++i)
        if (labels[i] != anchor_label) out.kept.push_back(i);
      break;
    case HandlingKind::kResampleBySim: {
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sims[a] < sims[b]; });
      order.resize(std::min(strategy.keep_count, n));
      std::sort(order.begin(), order.end());
      out.kept = std::move(order);
      break;
    }
    case HandlingKind::kReweightBySim: {
      out.kept.resize(n);
      std::iota(out.kept.begin(), out.kept.end(), 0);
      const double lo = *std::min_element(sims.begin(), sims.end());
      out.weights.resize(n);
      double z = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        out.weights[i] = std::exp(-(sims[i] - lo) / strategy.temperature);
        z += out.weights[i];
      }
      for (double& w : out.weights) w *= static_cast<double>(n) / z;
      break;
    }
  }
  if (out.kept.empty()) {
    out.fallback = true;
    out.kept.push_back(static_cast<std::size_t>(std::min_element(sims.begin(), sims.end()) - sims.begin()));
  }
  return out;
}

HandledNegatives apply_negative_handling(const NegativeHandling& strategy, const Embedding& /*anchor*/,
                                         const Embedding& positive, std::span<const Embedding> negatives,
                                         std::span<const int> neg_labels, int anchor_label) {
  std::vector<double> sims;
  sims.reserve(negatives.size());
  for (const auto& e : negatives) sims.push_back(similarity(positive, e));
  return apply_negative_handling(strategy, sims, neg_labels, anchor_label);
}

// --- batch loss -------------------------------------------------------------

namespace {

struct Direction {
  const Eigen::MatrixXd& a;
  const Eigen::MatrixXd& p;
  const Eigen::MatrixXd* v;
  std::size_t m;
  Eigen::MatrixXd& da;
  Eigen::MatrixXd& dp;
  Eigen::MatrixXd* dv;
};

void run_direction(const BatchLossConfig& cfg, const BatchInputs& in, Direction dir, double scale,
                   BatchLossResult& res, std::size_t& clamp_hits) {
  const auto b = static_cast<std::size_t>(dir.a.cols());
  const std::size_t n_neg = cfg.num_negatives == 0 ? b - 1 : cfg.num_negatives;
  if (n_neg > b - 1) fail(ErrorCode::kConfig, "num_negatives exceeds batch_size - 1 in-batch candidates");
  const bool need_sims = cfg.handling.kind != HandlingKind::kNone && cfg.handling.kind != HandlingKind::kRemoveByLabel;
  const bool reweight = cfg.handling.kind == HandlingKind::kReweightBySim;

  std::vector<std::size_t> cand(n_neg);
  std::vector<double> sims(n_neg), neg_scores, pos_set;
  std::vector<int> cand_labels(n_neg);
  ScoreGradients g;

  for (std::size_t i = 0; i < b; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t k = 0; k < n_neg; ++k) {
      cand[k] = (i + 1 + k) % b;
      const auto jj = static_cast<Eigen::Index>(cand[k]);
      sims[k] = need_sims ? dir.p.col(ii).dot(dir.p.col(jj)) : 0.0;
      cand_labels[k] = in.labels.empty() ? -1 : in.labels[cand[k]];
    }
    const int anchor_label = in.labels.empty() ? -1 : in.labels[i];
    if (cfg.handling.kind == HandlingKind::kRemoveByLabel && in.labels.empty())
      fail(ErrorCode::kInvalidArgument, "remove_by_label needs simulator labels");
    const HandledNegatives h = apply_negative_handling(cfg.handling, sims, cand_labels, anchor_label);
    if (h.fallback) ++res.fallback_events;

    neg_scores.resize(h.kept.size());
    for (std::size_t k = 0; k < h.kept.size(); ++k)
      neg_scores[k] = dir.a.col(ii).dot(dir.p.col(static_cast<Eigen::Index>(cand[h.kept[k]])));
    const double pos_score = dir.a.col(ii).dot(dir.p.col(ii));
    if (dir.v) {
      pos_set.resize(dir.m);
      for (std::size_t k = 0; k < dir.m; ++k)
        pos_set[k] = dir.a.col(ii).dot(dir.v->col(static_cast<Eigen::Index>(i * dir.m + k)));
    } else {
      pos_set.assign(1, pos_score);
    }

    EstimatorInputs est;
    est.pos_score = pos_score;
    est.neg_scores = neg_scores;
    est.neg_weights = h.weights;
    est.pos_set_scores = pos_set;
    est.eta = in.eta.empty() ? 0.0 : in.eta[i];
    est.gamma = in.gamma;
    loss_with_gradients(cfg.objective, est, g);
    if (g.clamped) ++clamp_hits;

    res.loss += scale * g.loss;
    res.d_gamma += scale * g.d_gamma;
    const auto ai = dir.a.col(ii);
    const auto pi = dir.p.col(ii);
    dir.da.col(ii) += scale * g.d_pos * pi;
    dir.dp.col(ii) += scale * g.d_pos * ai;
    for (std::size_t k = 0; k < h.kept.size(); ++k) {
      const double dn = scale * g.d_neg[k];
      if (dn == 0.0) continue;
      const auto jj = static_cast<Eigen::Index>(cand[h.kept[k]]);
      dir.da.col(ii) += dn * dir.p.col(jj);
      dir.dp.col(jj) += dn * ai;
    }
    if (dir.v) {
      for (std::size_t k = 0; k < dir.m; ++k) {
        const auto col = static_cast<Eigen::Index>(i * dir.m + k);
        const double dv = scale * g.d_pos_set[k];
        dir.da.col(ii) += dv * dir.v->col(col);
        dir.dv->col(col) += dv * ai;
      }
    } else {
      const double dv = scale * g.d_pos_set[0];
      dir.da.col(ii) += dv * pi;
      dir.dp.col(ii) += dv * ai;
    }
    if (reweight) {
      // w_k = N softmax(-q/T)_k with q_k = p_i . p_j; chain through the softmax.
      const auto nk = static_cast<double>(h.kept.size());
      double avg = 0.0;
      for (std::size_t k = 0; k < h.kept.size(); ++k) avg += (h.weights[k] / nk) * g.d_neg_weight[k];
      for (std::size_t k = 0; k < h.kept.size(); ++k) {
        const double sigma = h.weights[k] / nk;
        const double dq = -scale * (nk / cfg.handling.temperature) * sigma * (g.d_neg_weight[k] - avg);
        const auto jj = static_cast<Eigen::Index>(cand[h.kept[k]]);
        dir.dp.col(ii) += dq * dir.p.col(jj);
        dir.dp.col(jj) += dq * pi;
      }
    }
  }
}

}  // namespace

BatchLossResult batch_loss(const BatchLossConfig& config, const BatchInputs& in) {
  require(in.anchors && in.positives, "batch_loss: anchors and positives are required");
  const auto& a = *in.anchors;
  const auto& p = *in.positives;
  require(a.cols() == p.cols() && a.rows() == p.rows(), "batch_loss: anchor/positive shape mismatch");
  const auto b = static_cast<std::size_t>(a.cols());
  if (b < 2) fail(ErrorCode::kConfig, "batch_size must be >= 2 for in-batch negatives");
  require(in.eta.empty() || in.eta.size() == b, "batch_loss: one eta per anchor");
  require(in.labels.empty() || in.labels.size() == b, "batch_loss: one label per anchor");
  if (in.extra_positives) {
    require(in.num_extra >= 1 && static_cast<std::size_t>(in.extra_positives->cols()) == b * in.num_extra,
            "batch_loss: extra positives must hold M columns per anchor");
    if (config.symmetrize) fail(ErrorCode::kConfig, "symmetrize requires the positive to serve as v_1 (M = 1)");
  }

  BatchLossResult res;
  res.d_anchors = Eigen::MatrixXd::Zero(a.rows(), a.cols());
  res.d_positives = Eigen::MatrixXd::Zero(p.rows(), p.cols());
  if (in.extra_positives) res.d_extra = Eigen::MatrixXd::Zero(in.extra_positives->rows(), in.extra_positives->cols());

  std::size_t clamp_hits = 0;
  const double dirs = config.symmetrize ? 2.0 : 1.0;
  const double scale = 1.0 / (static_cast<double>(b) * dirs);
  run_direction(config, in,
                Direction{a, p, in.extra_positives, in.num_extra, res.d_anchors, res.d_positives,
                          in.extra_positives ? &res.d_extra : nullptr},
                scale, res, clamp_hits);
  if (config.symmetrize)
    run_direction(config, in, Direction{p, a, nullptr, 0, res.d_positives, res.d_anchors, nullptr}, scale, res,
                  clamp_hits);
  res.clamp_fraction = static_cast<double>(clamp_hits) / (static_cast<double>(b) * dirs);
  return res;
}

// --- asymptotic loss ----------------------------------------------------------

Eigen::MatrixXd embed_alphabet(const MixtureSpec& spec, const EncoderParams& params) {
  if (spec.mode != SimMode::kDiscrete) fail(ErrorCode::kInvalidArgument, "embed_alphabet needs a discrete spec");
  const auto d = static_cast<Eigen::Index>(spec.dim());
  Eigen::MatrixXd x(d, static_cast<Eigen::Index>(spec.alphabet.size()));
  for (std::size_t i = 0; i < spec.alphabet.size(); ++i)
    x.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(spec.alphabet[i].data(), d);
  return encode_features(params, x);
}

double asymptotic_loss_exact(const MixtureSpec& spec, const Eigen::MatrixXd& emb, double n) {
  if (spec.mode != SimMode::kDiscrete) fail(ErrorCode::kInvalidArgument, "exact asymptotic loss needs discrete mode");
  std::size_t supported = 0;
  for (double r : spec.class_dist.probs())
    if (r > 0.0) ++supported;
  if (supported < 2) fail(ErrorCode::kInvalidArgument, "asymptotic loss needs at least two classes (E_c undefined)");
  const std::size_t nx = spec.alphabet.size();
  require(static_cast<std::size_t>(emb.cols()) == nx, "embedding table must have one column per alphabet point");
  const Eigen::MatrixXd s = emb.transpose() * emb;
  const Eigen::MatrixXd es = s.array().exp().matrix();

  double total = 0.0;
  for (std::size_t c = 0; c < spec.num_classes(); ++c) {
    const double rc = spec.class_dist[c];
    if (rc <= 0.0) continue;
    const Pmf e = true_negative_pmf(spec, static_cast<int>(c));
    const Eigen::Map<const Eigen::VectorXd> ev(e.data(), static_cast<Eigen::Index>(nx));
    const Eigen::VectorXd inner = es * ev;  // inner[x] = E_{x- ~ E_c} e^{s(x,x-)}
    const auto& pc = spec.pmfs[c];
    double class_sum = 0.0;
    for (std::size_t x = 0; x < nx; ++x) {
      if (pc[x] <= 0.0) continue;
      const auto xi = static_cast<Eigen::Index>(x);
      double row = 0.0;
      for (std::size_t xp = 0; xp < nx; ++xp) {
        if (pc[xp] <= 0.0) continue;
        const double sp = s(xi, static_cast<Eigen::Index>(xp));
        row += pc[xp] * (std::log(std::exp(sp) + n * inner[xi]) - sp);
      }
      class_sum += pc[x] * row;
    }
    total += rc * class_sum;
  }
  return total;
}

double asymptotic_loss(const MixtureSpec& spec, const EncoderParams& params, double n) {
  return asymptotic_loss_exact(spec, embed_alphabet(spec, params), n);
}

double asymptotic_loss_mc(const MixtureSpec& spec, const EncoderParams& params, double n, std::size_t outer,
                          std::size_t inner, Rng& rng) {
  require(outer >= 1 && inner >= 1, "asymptotic_loss_mc needs positive sample counts");
  std::size_t supported = 0;
  for (double r : spec.class_dist.probs())
    if (r > 0.0) ++supported;
  if (supported < 2) fail(ErrorCode::kInvalidArgument, "asymptotic loss needs at least two classes (E_c undefined)");
  double total = 0.0;
  for (std::size_t t = 0; t < outer; ++t) {
    const DataPoint x = sample_marginal(spec, rng);
    const DataPoint xp = sample_conditional(spec, x.latent_class, rng);
    const Embedding ex = encode(params, x);
    const double sp = similarity(ex, encode(params, xp));
    double acc = 0.0;
    for (std::size_t k = 0; k < inner; ++k)
      acc += std::exp(similarity(ex, encode(params, sample_true_negative(spec, x.latent_class, rng))));
    total += std::log(std::exp(sp) + n * acc / static_cast<double>(inner)) - sp;
  }
  return total / static_cast<double>(outer);
}

}  // namespace dcl
