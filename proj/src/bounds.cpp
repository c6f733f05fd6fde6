#include "dcl/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "dcl/error.hpp"
#include "dcl/objectives.hpp"

namespace dcl {

namespace {

constexpr double kE2 = std::numbers::e * std::numbers::e;

void require_discrete(const MixtureSpec& spec, const char* what) {
  if (spec.mode != SimMode::kDiscrete) fail(ErrorCode::kInvalidArgument, std::string(what) + " needs a discrete spec");
}

std::vector<double> cumulative(std::span<const double> p) {
  std::vector<double> cdf(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) cdf[i] = acc += p[i];
  return cdf;
}

// Adds `count` draws from the distribution with cumulative table `cdf` into `hist`.
void draw_counts(const std::vector<double>& cdf, std::size_t count, Rng& rng, Eigen::VectorXd& hist) {
  const double total = cdf.back();
  for (std::size_t i = 0; i < count; ++i) {
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    auto idx = static_cast<Eigen::Index>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(cdf.size()) - 1));
    // Skip zero-mass entries that upper_bound can land on through rounding.
    while (idx > 0 && cdf[static_cast<std::size_t>(idx)] == cdf[static_cast<std::size_t>(idx - 1)]) --idx;
    hist[idx] += 1.0;
  }
}

Eigen::MatrixXd unit_embeddings(const MixtureSpec& spec, const EncoderParams& params) {
  return embed_alphabet(spec, params) / params.gamma();
}

}  // namespace

std::vector<AnchorAtom> anchor_atoms(const MixtureSpec& spec, const EtaProvider& eta) {
  require_discrete(spec, "anchor_atoms");
  std::vector<AnchorAtom> atoms;
  for (std::size_t c = 0; c < spec.num_classes(); ++c) {
    const double rc = spec.class_dist[c];
    if (rc <= 0.0) continue;
    const auto& ts = spec.templates[c];
    double wsum = 0.0;
    for (const auto& t : ts) wsum += t.weight;
    for (std::size_t j = 0; j < spec.alphabet.size(); ++j) {
      const double pj = spec.pmfs[c][j];
      if (pj <= 0.0) continue;
      for (std::size_t t = 0; t < ts.size(); ++t) {
        DataPoint x;
        x.features = spec.alphabet[j];
        x.tokens = ts[t].tokens;
        x.latent_class = static_cast<int>(c);
        x.template_id = static_cast<int>(t);
        x.point_index = static_cast<int>(j);
        atoms.push_back({static_cast<int>(c), static_cast<int>(j), static_cast<int>(t), rc * pj * ts[t].weight / wsum,
                         eta.eta_of(x)});
      }
    }
  }
  return atoms;
}

Prop1Terms prop1_rhs(const MixtureSpec& spec, const EtaProvider& eta, double n, double m, BoundConstants constants) {
  require(n > 0.0 && m > 0.0, "prop1_rhs: N and M must be positive");
  double e_inv = 0.0, e_ratio = 0.0, e_mis = 0.0;
  for (const auto& a : anchor_atoms(spec, eta)) {
    const double r = spec.class_dist[static_cast<std::size_t>(a.cls)];
    if (r >= 1.0) fail(ErrorCode::kInvalidArgument, "prop1_rhs: a class with rho = 1 leaves E_c undefined");
    e_inv += a.weight / (1.0 - r);
    e_ratio += a.weight * r / (1.0 - r);
    e_mis += a.weight * std::abs(1.0 / (1.0 - a.eta) - 1.0 / (1.0 - r));
  }
  const double c_n = 3.0 * kE2 * std::sqrt(std::numbers::pi / 2.0);
  const double c_m = constants == BoundConstants::kProof ? c_n : 2.0 * kE2;
  const double c_eta = constants == BoundConstants::kProof ? 3.0 * kE2 : 2.0 * kE2;
  Prop1Terms t;
  t.term_n = c_n / std::sqrt(n) * e_inv;
  t.term_m = c_m / std::sqrt(m) * e_ratio;
  t.term_eta = c_eta * e_mis;
  t.total = t.term_n + t.term_m + t.term_eta;
  return t;
}

GapEstimate empirical_gap(const MixtureSpec& spec, const Eigen::MatrixXd& emb, const EtaProvider& eta,
                          std::size_t n, std::size_t m, const GapOptions& options, Rng& rng) {
  require_discrete(spec, "empirical_gap");
  require(n >= 1 && m >= 1, "empirical_gap: N and M must be >= 1");
  require(options.min_trials >= 1, "empirical_gap: need at least one trial");
  const std::size_t nx = spec.alphabet.size();
  const std::size_t nc = spec.num_classes();
  const auto dn = static_cast<double>(n);
  const auto dm = static_cast<double>(m);

  GapEstimate out;
  out.l_tilde = asymptotic_loss_exact(spec, emb, dn);
  const Eigen::MatrixXd s = emb.transpose() * emb;
  const Eigen::MatrixXd es = s.array().exp().matrix();
  const double floor = std::exp(-1.0);
  const auto atoms = anchor_atoms(spec, eta);

  const Pmf marginal = marginal_pmf(spec);
  const auto cdf_u = cumulative(marginal);
  std::vector<std::vector<double>> cdf_v(nc);
  for (std::size_t c = 0; c < nc; ++c) cdf_v[c] = cumulative(spec.pmfs[c]);

  auto positive_loss = [&](const AnchorAtom& a, double g) {
    const auto& pc = spec.pmfs[static_cast<std::size_t>(a.cls)];
    double acc = 0.0;
    for (std::size_t xp = 0; xp < nx; ++xp) {
      if (pc[xp] <= 0.0) continue;
      const double sp = s(a.point, static_cast<Eigen::Index>(xp));
      const double z = std::exp(sp) + dn * g;
      acc += pc[xp] * (z > 0.0 ? std::log(z) - sp : std::numeric_limits<double>::quiet_NaN());
    }
    return acc;
  };

  double sum_c = 0.0, sq_c = 0.0, sum_u = 0.0, sq_u = 0.0;
  std::size_t trials = 0;
  Eigen::VectorXd hu(static_cast<Eigen::Index>(nx));
  std::vector<Eigen::VectorXd> hv(nc, Eigen::VectorXd(static_cast<Eigen::Index>(nx)));
  std::vector<Eigen::VectorXd> bv(nc);

  auto run = [&](std::size_t count) {
    for (std::size_t t = 0; t < count; ++t, ++trials) {
      Rng trng = rng.split(trials);
      hu.setZero();
      draw_counts(cdf_u, n, trng, hu);
      const Eigen::VectorXd a_mean = es * hu / dn;
      for (std::size_t c = 0; c < nc; ++c) {
        if (spec.class_dist[c] <= 0.0) continue;
        hv[c].setZero();
        draw_counts(cdf_v[c], m, trng, hv[c]);
        bv[c] = es * hv[c] / dm;
      }
      double lc = 0.0, lu = 0.0;
      for (const auto& a : atoms) {
        const double g0 = (a_mean[a.point] - a.eta * bv[static_cast<std::size_t>(a.cls)][a.point]) / (1.0 - a.eta);
        lc += a.weight * positive_loss(a, std::max(g0, floor));
        lu += a.weight * positive_loss(a, g0);
      }
      sum_c += lc;
      sq_c += lc * lc;
      sum_u += lu;
      sq_u += lu * lu;
    }
  };
  auto stderr_of = [&](double sum, double sq) {
    const auto k = static_cast<double>(trials);
    const double mean = sum / k;
    const double var = k > 1 ? std::max(0.0, (sq - k * mean * mean) / (k - 1.0)) : 0.0;
    return std::sqrt(var / k);
  };

  run(options.min_trials);
  if (options.stderr_reference > 0.0)
    while (trials < options.max_trials &&
           !(stderr_of(sum_c, sq_c) < options.rel_stderr * options.stderr_reference))
      run(std::min(trials, options.max_trials - trials));

  const auto k = static_cast<double>(trials);
  out.trials = trials;
  out.l_clamped = sum_c / k;
  out.l_clamped_stderr = stderr_of(sum_c, sq_c);
  out.l_unclamped = sum_u / k;
  out.l_unclamped_stderr = std::isfinite(out.l_unclamped) ? stderr_of(sum_u, sq_u) : out.l_unclamped;
  out.gap = std::abs(out.l_tilde - out.l_clamped);
  out.gap_unclamped = std::abs(out.l_tilde - out.l_unclamped);
  return out;
}

GapEstimate empirical_gap(const MixtureSpec& spec, const EncoderParams& params, const EtaProvider& eta,
                          std::size_t n, std::size_t m, const GapOptions& options, Rng& rng) {
  return empirical_gap(spec, unit_embeddings(spec, params), eta, n, m, options, rng);
}

BoundReport verify_prop1(const MixtureSpec& spec, const EncoderParams& params, const EtaProvider& eta,
                         std::size_t n, std::size_t m, Rng& rng, std::size_t min_trials) {
  BoundReport r;
  r.n = n;
  r.m = m;
  r.eta_kind = eta.kind();
  r.proof = prop1_rhs(spec, eta, static_cast<double>(n), static_cast<double>(m), BoundConstants::kProof);
  r.statement = prop1_rhs(spec, eta, static_cast<double>(n), static_cast<double>(m), BoundConstants::kStatement);
  GapOptions opt;
  opt.min_trials = min_trials;
  opt.stderr_reference = r.proof.total;
  r.gap = empirical_gap(spec, params, eta, n, m, opt, rng);
  r.lhs = r.gap.gap;
  r.lhs_stderr = r.gap.l_clamped_stderr;
  r.rhs_total = r.proof.total;
  r.holds = r.lhs <= r.rhs_total;
  r.holds_statement = r.lhs <= r.statement.total;
  r.holds_unclamped = std::isfinite(r.gap.gap_unclamped) && r.gap.gap_unclamped <= r.rhs_total;
  return r;
}

namespace {
nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }
}  // namespace

void to_json(nlohmann::json& j, const Prop1Terms& t) {
  j = {{"term_N", t.term_n}, {"term_M", t.term_m}, {"term_eta", t.term_eta}, {"rhs_total", t.total}};
}

void to_json(nlohmann::json& j, const BoundReport& r) {
  j = {{"N", r.n},
       {"M", r.m},
       {"eta", r.eta_kind},
       {"lhs", r.lhs},
       {"lhs_stderr", r.lhs_stderr},
       {"lhs_unclamped", number_or_null(r.gap.gap_unclamped)},
       {"lhs_unclamped_stderr", number_or_null(r.gap.l_unclamped_stderr)},
       {"l_tilde", r.gap.l_tilde},
       {"l_clamped", r.gap.l_clamped},
       {"trials", r.gap.trials},
       {"term_N", r.proof.term_n},
       {"term_M", r.proof.term_m},
       {"term_eta", r.proof.term_eta},
       {"rhs_total", r.rhs_total},
       {"statement_constants", r.statement},
       {"holds", r.holds},
       {"holds_statement", r.holds_statement},
       {"holds_unclamped", r.holds_unclamped}};
}

// --- supervised losses -------------------------------------------------------------

std::vector<Task> task_distribution(const ClassDistribution& dist, std::size_t k) {
  const std::size_t nc = dist.size();
  if (k == 0 || k > nc)
    fail(ErrorCode::kInvalidArgument, "task size K=" + std::to_string(k) + " must lie in [1, " + std::to_string(nc) + "]");
  double combos = 1.0;
  for (std::size_t i = 0; i < k; ++i) combos = combos * static_cast<double>(nc - i) / static_cast<double>(i + 1);

  std::vector<Task> tasks;
  if (combos <= 1e4) {
    std::vector<int> idx(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = static_cast<int>(i);
    double z = 0.0;
    while (true) {
      double p = 1.0;
      for (int c : idx) p *= dist[static_cast<std::size_t>(c)];
      if (p > 0.0) {
        tasks.push_back({idx, p});
        z += p;
      }
      // Next combination in lexicographic order.
      std::size_t i = k;
      while (i > 0 && idx[i - 1] == static_cast<int>(nc - k + i - 1)) --i;
      if (i == 0) break;
      ++idx[i - 1];
      for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
    if (tasks.empty()) fail(ErrorCode::kInvalidArgument, "no K-subset of classes has positive probability");
    for (auto& t : tasks) t.prob /= z;
    return tasks;
  }
  // Rejection sampling of K iid draws conditioned on distinctness gives p_T
  // proportional to the product of priors.
  Rng rng(0x5eedf00dULL);
  while (tasks.size() < 10000) {
    std::vector<int> cls(k);
    for (auto& c : cls) c = sample_class(dist, rng);
    std::vector<int> sorted = cls;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) continue;
    tasks.push_back({sorted, 1e-4});
  }
  return tasks;
}

namespace {

struct TaskData {
  Eigen::MatrixXd x;  // d x n samples
  std::vector<int> labels;
  std::vector<double> weights;
  Eigen::MatrixXd w_mu;  // K x d
};

TaskData task_data(const MixtureSpec& spec, const Eigen::MatrixXd& emb, const Task& task) {
  TaskData td;
  const std::size_t nx = spec.alphabet.size();
  td.w_mu.resize(static_cast<Eigen::Index>(task.classes.size()), emb.rows());
  double z = 0.0;
  for (int c : task.classes) z += spec.class_dist[static_cast<std::size_t>(c)];
  std::vector<Eigen::Index> cols;
  for (std::size_t t = 0; t < task.classes.size(); ++t) {
    const auto c = static_cast<std::size_t>(task.classes[t]);
    const Eigen::Map<const Eigen::VectorXd> pc(spec.pmfs[c].data(), static_cast<Eigen::Index>(nx));
    td.w_mu.row(static_cast<Eigen::Index>(t)) = (emb * pc).transpose();
    for (std::size_t j = 0; j < nx; ++j) {
      if (spec.pmfs[c][j] <= 0.0) continue;
      cols.push_back(static_cast<Eigen::Index>(j));
      td.labels.push_back(static_cast<int>(t));
      td.weights.push_back(spec.class_dist[c] * spec.pmfs[c][j] / z);
    }
  }
  td.x.resize(emb.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) td.x.col(static_cast<Eigen::Index>(i)) = emb.col(cols[i]);
  return td;
}

SoftmaxProblem problem_of(const TaskData& td, int k) {
  SoftmaxProblem p;
  p.x = &td.x;
  p.labels = td.labels;
  p.weights = td.weights;
  p.num_classes = k;
  p.bias = false;
  return p;
}

}  // namespace

double sup_loss_mean_classifier(const MixtureSpec& spec, const Eigen::MatrixXd& emb, std::size_t k) {
  require_discrete(spec, "sup_loss_mean_classifier");
  double total = 0.0;
  for (const auto& task : task_distribution(spec.class_dist, k)) {
    const TaskData td = task_data(spec, emb, task);
    total += task.prob * softmax_objective(problem_of(td, static_cast<int>(k)), td.w_mu, {}, nullptr, nullptr);
  }
  return total;
}

double sup_loss_mean_classifier(const MixtureSpec& spec, const EncoderParams& params, std::size_t k) {
  return sup_loss_mean_classifier(spec, embed_alphabet(spec, params), k);
}

BestLinearResult sup_loss_best_linear(const MixtureSpec& spec, const Eigen::MatrixXd& emb, std::size_t k,
                                      const LbfgsOptions& options) {
  require_discrete(spec, "sup_loss_best_linear");
  BestLinearResult out;
  for (const auto& task : task_distribution(spec.class_dist, k)) {
    const TaskData td = task_data(spec, emb, task);
    const SoftmaxFit fit = fit_softmax(problem_of(td, static_cast<int>(k)), td.w_mu, options);
    out.loss += task.prob * fit.result.value;
    out.converged = out.converged && fit.result.converged;
  }
  return out;
}

BestLinearResult sup_loss_best_linear(const MixtureSpec& spec, const EncoderParams& params, std::size_t k,
                                      const LbfgsOptions& options) {
  return sup_loss_best_linear(spec, embed_alphabet(spec, params), k, options);
}

double lemma_a1_threshold(const ClassDistribution& dist) {
  double lo = 1.0;
  for (double r : dist.probs())
    if (r > 0.0) lo = std::min(lo, r);
  return (1.0 - lo) / lo;
}

SupLossReport lemma_a1_check(const MixtureSpec& spec, const Eigen::MatrixXd& emb, double n, std::size_t k) {
  require_discrete(spec, "lemma_a1_check");
  const double threshold = lemma_a1_threshold(spec.class_dist);
  if (n < threshold * (1.0 - 1e-12))
    fail(ErrorCode::kInvalidArgument,
         "lemma_a1_check: N=" + std::to_string(n) + " is below the threshold (1-rho_min)/rho_min=" +
             std::to_string(threshold));
  if (k == 0) k = spec.num_classes();
  SupLossReport r;
  r.n_used = n;
  r.k = k;
  r.l_sup_mu = sup_loss_mean_classifier(spec, emb, k);
  const BestLinearResult best = sup_loss_best_linear(spec, emb, k);
  r.l_sup = best.loss;
  r.converged = best.converged;
  r.l_tilde = asymptotic_loss_exact(spec, emb, n);
  r.holds = r.l_sup <= r.l_sup_mu + 1e-8 && r.l_sup_mu <= r.l_tilde + 1e-8;
  return r;
}

SupLossReport lemma_a1_check(const MixtureSpec& spec, const EncoderParams& params, double n, std::size_t k) {
  return lemma_a1_check(spec, embed_alphabet(spec, params), n, k);
}

void to_json(nlohmann::json& j, const SupLossReport& r) {
  j = {{"l_sup", r.l_sup},   {"l_sup_mu", r.l_sup_mu}, {"l_tilde", r.l_tilde}, {"n_used", r.n_used},
       {"K", r.k},           {"converged", r.converged}, {"holds", r.holds}};
}

// --- Lipschitz factors -----------------------------------------------------------------

LipschitzFactors lipschitz_factors(double n, double m, double eta_max, double grad_kappa_norm) {
  require(eta_max > 0.0 && eta_max < 1.0, "lipschitz_factors: eta_max must lie in (0, 1)");
  require(n > 0.0 && m > 0.0, "lipschitz_factors: N and M must be positive");
  const double e4 = kE2 * kE2;
  const double q = 1.0 - eta_max;
  LipschitzFactors f;
  // N / (1 + N e^{-2}) < e^2 for every N.
  f.l_omega = kE2;
  f.l_psi = std::sqrt(e4 / (q * q * n) + eta_max * eta_max * e4 / (q * q * m) + kE2 / (q * q * q * q) + 1.0);
  f.l_ell = f.l_omega * f.l_psi;
  f.l_phi = std::sqrt(6.0 * n + 6.0 * m + 2.0 + grad_kappa_norm * grad_kappa_norm);
  f.b = std::log(1.0 + n * std::max((kE2 - eta_max * std::exp(-2.0)) / q, 1.0));
  return f;
}

}  // namespace dcl
