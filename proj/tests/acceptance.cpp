// Acceptance checks, one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria. `--only 3,5` runs a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dcl/bounds.hpp"
#include "dcl/error.hpp"
#include "dcl/experiments.hpp"
#include "dcl/objectives.hpp"
#include "dcl/runner.hpp"
#include "dcl/scenarios.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "stats.hpp"

using namespace dcl;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dcl_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Rows of a CSV written by the runner: skips the '#' header comment.
std::vector<std::map<std::string, std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  std::vector<std::string> header;
  std::vector<std::map<std::string, std::string>> rows;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header.empty()) {
      header = split(line);
      continue;
    }
    const auto cells = split(line);
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) row[header[i]] = cells[i];
    rows.push_back(row);
  }
  return rows;
}

// 1 -------------------------------------------------------------------------------------

Verdict prop1_holds() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path out = scratch_dir("bounds");
  RunRequest req;
  req.subcommand = "verify-bounds";
  req.config = {{"num_configs", 60}, {"seed", 2024}};
  req.output_dir = out.string();
  req.quiet = true;
  run(req);
  const auto rows = read_csv(out / "bounds.csv");
  std::size_t holds = 0, precise = 0, in_range = 0;
  std::set<std::string> etas, ns, ms;
  double worst_ratio = 0.0;
  for (const auto& r : rows) {
    const double lhs = std::stod(r.at("lhs")), se = std::stod(r.at("lhs_stderr")), rhs = std::stod(r.at("rhs_total"));
    holds += r.at("holds") == "true" && lhs <= rhs;
    precise += se < 0.05 * rhs;
    const int k = std::stoi(r.at("classes")), a = std::stoi(r.at("alphabet"));
    in_range += k >= 2 && k <= 8 && a <= 32;
    etas.insert(r.at("eta"));
    ns.insert(r.at("N"));
    ms.insert(r.at("M"));
    worst_ratio = std::max(worst_ratio, lhs / rhs);
  }
  const double secs = seconds_since(t0);
  fs::remove_all(out);
  const std::size_t n = rows.size();
  Verdict v;
  v.pass = n >= 50 && holds == n && precise == n && in_range == n && etas.size() == 4 && secs < 300;
  v.detail = fmt("%zu configs (%zu eta kinds, %zu N values, %zu M values), holds %zu/%zu, stderr<5%% RHS %zu/%zu, "
                 "max lhs/rhs %.3g, %.1f s (limit 300 s)",
                 n, etas.size(), ns.size(), ms.size(), holds, n, precise, n, worst_ratio, secs);
  return v;
}

// 2 -------------------------------------------------------------------------------------

Verdict misspecification_term() {
  Rng rng(2);
  RandomDiscreteConfig rc;
  double worst_oracle = 0.0, min_const = INFINITY;
  for (int t = 0; t < 200; ++t) {
    auto spec = std::make_shared<const MixtureSpec>(random_discrete_spec(rc, rng));
    const double n = 1 + static_cast<double>(rng.below(256)), m = 1 + static_cast<double>(rng.below(16));
    worst_oracle = std::max(worst_oracle, std::abs(prop1_rhs(*spec, EtaProvider::true_oracle(spec), n, m).term_eta));
    for (double c : {0.05, 0.5}) {
      bool matches = false;
      for (std::size_t k = 0; k < spec->num_classes(); ++k) matches = matches || spec->class_dist[k] == c;
      if (!matches) min_const = std::min(min_const, prop1_rhs(*spec, EtaProvider::constant(c), n, m).term_eta);
    }
  }
  return {worst_oracle <= 1e-15 && min_const > 0.0,
          fmt("200 random specs: max |term_eta| with oracle %.3g (tol 1e-15), min term_eta with constant 0.05/0.5 "
              "%.3g (must be > 0)",
              worst_oracle, min_const)};
}

// 3 -------------------------------------------------------------------------------------

Verdict estimator_enumeration() {
  Rng rng(3);
  double worst = 0.0;
  int cases = 0;
  for (int t = 0; t < 40; ++t) {
    const int k = 2 + static_cast<int>(rng.below(3)), a = 2 + static_cast<int>(rng.below(3));
    const auto spec = oracle::small_discrete(rng, k, a);
    const std::size_t n = 1 + rng.below(3), m = 1 + rng.below(2);
    Eigen::MatrixXd e(3, a);
    for (int j = 0; j < a; ++j) e.col(j) = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized();
    const auto marginal = marginal_pmf(spec);
    for (int x = 0; x < a; ++x) {
      std::vector<double> s(static_cast<std::size_t>(a)), es(s.size());
      for (int j = 0; j < a; ++j) {
        s[j] = e.col(x).dot(e.col(j));
        es[j] = std::exp(s[j]);
      }
      for (int c = 0; c < k; ++c) {
        long double expect = 0;
        oracle::for_each_tuple(marginal, n, [&](const std::vector<int>& u, long double pu) {
          oracle::for_each_tuple(spec.pmfs[c], m, [&](const std::vector<int>& v, long double pv) {
            std::vector<double> su, sv;
            for (int i : u) su.push_back(s[i]);
            for (int i : v) sv.push_back(s[i]);
            EstimatorInputs in;
            in.neg_scores = su;
            in.pos_set_scores = sv;
            in.eta = spec.class_dist[c];
            expect += pu * pv * g_raw(in);
          });
        });
        worst = std::max(worst, std::abs(static_cast<double>(expect - oracle::true_negative_mean(spec, c, es))));
        ++cases;
      }
    }
  }
  return {worst <= 1e-10, fmt("%d (spec, anchor, class) cases by exhaustive enumeration, max |E[g0] - E_Ec[e^s]| "
                              "%.3g (tol 1e-10)",
                              cases, worst)};
}

// 4 -------------------------------------------------------------------------------------

Verdict reduction_identity() {
  Rng rng(4);
  std::size_t checked = 0, equal = 0;
  for (int t = 0; t < 100000; ++t) {
    const double gamma = 0.3 + 3 * rng.uniform();
    std::vector<double> su(1 + rng.below(255)), sv{gamma * gamma * (2 * rng.uniform() - 1)};
    for (auto& s : su) s = gamma * gamma * (2 * rng.uniform() - 1);
    EstimatorInputs in;
    in.pos_score = gamma * gamma * (2 * rng.uniform() - 1);
    in.neg_scores = su;
    in.pos_set_scores = sv;
    in.gamma = gamma;
    in.eta = 0.0;
    if (g_raw(in) <= std::exp(-gamma * gamma)) continue;
    ++checked;
    equal += debiased_loss(in) == contrastive_loss(in);
  }
  return {checked > 0 && equal == checked,
          fmt("%zu/%zu random inputs with inactive clamp are bitwise equal", equal, checked)};
}

// 5 -------------------------------------------------------------------------------------

Verdict clamp_invariant() {
  Rng rng(5);
  std::size_t violations = 0, clamped = 0;
  const std::size_t cases = 1000000;
  std::vector<double> su, sv;
  for (std::size_t t = 0; t < cases; ++t) {
    const double gamma = 0.05 + 4 * rng.uniform();
    su.resize(1 + rng.below(64));
    sv.resize(1 + rng.below(8));
    for (auto& s : su) s = gamma * gamma * (2 * rng.uniform() - 1);
    for (auto& s : sv) s = gamma * gamma * (2 * rng.uniform() - 1);
    EstimatorInputs in;
    in.neg_scores = su;
    in.pos_set_scores = sv;
    in.gamma = gamma;
    in.eta = t % 10 == 0 ? 0.0 : (t % 10 == 1 ? 0.999999 : rng.uniform() * 0.999999);
    const double floor = std::exp(-gamma * gamma);
    const double g = g_estimate(in);
    violations += !(g >= floor);
    clamped += g == floor;
  }
  return {violations == 0, fmt("%zu fuzzed inputs, %zu below e^{-gamma^2}, %zu hit the floor", cases, violations, clamped)};
}

// 6 -------------------------------------------------------------------------------------

Verdict gradient_check() {
  const std::size_t configs = 120;
  double worst = 0.0;
  std::size_t coords = 0, bad = 0;
  std::string worst_label;
  std::set<std::string> combos;
  for (std::size_t t = 0; t < configs; ++t) {
    const auto r = gradcheck::run(t);
    coords += r.coords;
    bad += r.worst >= 1e-4;
    combos.insert(r.label.substr(0, r.label.find('/', r.label.find('/') + 1)));
    if (r.worst > worst) {
      worst = r.worst;
      worst_label = r.label;
    }
  }
  return {bad == 0, fmt("%zu configs, %zu (objective/eta, handling) combinations, %zu coordinates, central FD h=1e-5, "
                        "max rel err %.3g at %s (tol 1e-4)",
                        configs, combos.size(), coords, worst, worst_label.c_str())};
}

// 7 -------------------------------------------------------------------------------------

Verdict lemma_a1() {
  Rng rng(7);
  const auto spec = oracle::small_discrete(rng, 3, 8, 4);
  const double threshold = lemma_a1_threshold(spec.class_dist);
  const double n = std::ceil(threshold);
  std::size_t holds = 0;
  double worst_slack = -INFINITY;
  for (int t = 0; t < 100; ++t) {
    EncoderConfig ec;
    ec.input_dim = 4;
    ec.hidden = 8;
    ec.output_dim = 4;
    Rng init = rng.split(static_cast<std::uint64_t>(t));
    const auto params = EncoderParams::init(ec, init);
    const auto r = lemma_a1_check(spec, params, n);
    holds += r.l_sup <= r.l_sup_mu + 1e-8 && r.l_sup_mu <= r.l_tilde + 1e-8;
    worst_slack = std::max({worst_slack, r.l_sup - r.l_sup_mu, r.l_sup_mu - r.l_tilde});
  }
  bool errors_below = false;
  try {
    Rng init(99);
    EncoderConfig ec;
    ec.input_dim = 4;
    lemma_a1_check(spec, EncoderParams::init(ec, init), threshold * 0.5);
  } catch (const Error& e) {
    errors_below = e.code() == ErrorCode::kInvalidArgument;
  }
  return {holds == 100 && errors_below,
          fmt("threshold (1-rho_min)/rho_min = %.3f, N = %.0f: ordering holds %zu/100 (slack 1e-8, worst violation "
              "margin %.3g); N below threshold raises: %s",
              threshold, n, holds, worst_slack, errors_below ? "yes" : "no")};
}

// 8 -------------------------------------------------------------------------------------

Verdict cifar_ordering() {
  const auto t0 = std::chrono::steady_clock::now();
  CifarAnalogConfig c;
  c.r_grid = {0.1, 0.9};
  const auto rows = run_cifar_analog(c);
  std::map<std::tuple<double, std::string, double>, double> acc;
  for (const auto& r : rows) acc[{r.r, r.variant, r.label_fraction}] += r.accuracy / static_cast<double>(c.seeds.size());
  auto gap = [&](double lf) {
    double other = -1;
    for (const auto& v : c.variants)
      if (v != "DCL-eta_True") other = std::max(other, acc[{0.1, v, lf}]);
    return acc[{0.1, "DCL-eta_True", lf}] - other;
  };
  double spread = 0.0;
  for (double lf : c.label_fractions) {
    double lo = 1, hi = 0;
    for (const auto& v : c.variants) {
      lo = std::min(lo, acc[{0.9, v, lf}]);
      hi = std::max(hi, acc[{0.9, v, lf}]);
    }
    spread = std::max(spread, hi - lo);
  }
  const double g_lo = gap(c.label_fractions.front()), g_hi = gap(c.label_fractions.back());
  const double secs = seconds_since(t0);
  std::string gaps;
  for (double lf : c.label_fractions) gaps += fmt(" lf=%g:%+.2f", lf, 100 * gap(lf));
  return {g_lo >= 0.01 && g_lo > g_hi && spread <= 0.01 && secs < 1200,
          fmt("r=0.1 eta_True minus best other (pts):%s; need >= 1 at lf=%g and above lf=%g; r=0.9 max spread %.2f pts "
              "(tol 1); %.0f s (limit 1200 s)",
              gaps.c_str(), c.label_fractions.front(), c.label_fractions.back(), 100 * spread, secs)};
}

// 9 -------------------------------------------------------------------------------------

Verdict eta_tradeoff() {
  CrossModalExperimentConfig c;
  const auto rows = run_cross_modal(c);
  std::map<std::string, std::map<std::uint64_t, CrossModalRow>> by;
  for (const auto& r : rows) by[r.variant][r.seed] = r;
  std::vector<std::string> consts;
  for (double e : c.eta_grid)
    for (const auto& r : rows)
      if (r.variant != "eta_LM" && r.eta == e) {
        consts.push_back(r.variant);
        break;
      }
  // Paired test: Spearman rho of the metric against eta within each seed,
  // summed over seeds, against its exact permutation null.
  std::vector<std::vector<double>> head, tail;
  for (auto s : c.seeds) {
    std::vector<double> h, t;
    for (const auto& v : consts) {
      h.push_back(by[v][s].head_prompt_accuracy);
      t.push_back(by[v][s].tail_avg_recall);
    }
    head.push_back(h);
    tail.push_back(t);
  }
  const auto th = stats::paired_spearman(head, +1), tt = stats::paired_spearman(tail, -1);
  auto mean = [&](const std::string& v, auto field) {
    double m = 0;
    for (auto s : c.seeds) m += field(by[v][s]) / static_cast<double>(c.seeds.size());
    return m;
  };
  auto head_of = [](const CrossModalRow& r) { return r.head_prompt_accuracy; };
  auto recall_of = [](const CrossModalRow& r) { return r.all_avg_recall; };
  double best_h = 0, best_r = 0;
  std::string table;
  for (const auto& v : consts) {
    best_h = std::max(best_h, mean(v, head_of));
    best_r = std::max(best_r, mean(v, recall_of));
    table += fmt(" %s %.3f/%.3f", v.c_str(), mean(v, head_of), mean(v, recall_of));
  }
  const double lm_h = mean("eta_LM", head_of), lm_r = mean("eta_LM", recall_of);
  const bool trend = th.p < 0.05 && tt.p < 0.05;
  const bool lm = lm_r >= best_r - 0.01 && lm_h >= best_h - 0.01;
  return {trend && lm,
          fmt("head acc vs eta: mean seed rho %+.2f (one-sided p=%.4f); tail recall vs eta: %+.2f (p=%.4f); alpha 0.05. "
              "head/avg-recall:%s eta_LM %.3f/%.3f; LM margins head %+.3f recall %+.3f (tol -0.01)",
              th.mean_rho, th.p, tt.mean_rho, tt.p, table.c_str(), lm_h, lm_r, lm_h - best_h, lm_r - best_r)};
}

// 10 ------------------------------------------------------------------------------------

Verdict scaling_laws() {
  Rng rng(10);
  RandomDiscreteConfig rc;
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    auto spec = std::make_shared<const MixtureSpec>(random_discrete_spec(rc, rng));
    const auto eta = t % 2 ? EtaProvider::true_oracle(spec) : EtaProvider::constant(0.1);
    const double n = 1 + static_cast<double>(rng.below(1000)), m = 1 + static_cast<double>(rng.below(100));
    const auto a = prop1_rhs(*spec, eta, n, m), bn = prop1_rhs(*spec, eta, 4 * n, m), bm = prop1_rhs(*spec, eta, n, 4 * m);
    worst = std::max({worst, std::abs(bn.term_n / a.term_n - 0.5), std::abs(bm.term_m / a.term_m - 0.5)});
  }
  return {worst <= 1e-12, fmt("200 random (spec, N, M): max |ratio - 0.5| %.3g (tol 1e-12)", worst)};
}

// 11 ------------------------------------------------------------------------------------

Verdict determinism() {
  const nlohmann::json cifar = {{"r_grid", {0.1, 0.9}},
                                {"seeds", {0, 1}},
                                {"label_fractions", {0.1, 1.0}},
                                {"probe_pool", 2000},
                                {"test_size", 500},
                                {"train", {{"epochs", 2}}}};
  const nlohmann::json cross = {{"seeds", {0, 1}}, {"eval_size", 300}, {"prompt_per_side", 100}, {"train", {{"epochs", 2}}}};
  std::size_t files = 0, identical = 0;
  for (const auto& [target, cfg] : {std::pair{"cifar-analog", cifar}, std::pair{"cross-modal", cross}}) {
    std::vector<fs::path> dirs;
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path out = scratch_dir(std::string(target) + std::to_string(rep));
      RunRequest req;
      req.subcommand = "repro";
      req.target = target;
      req.config = cfg;
      req.output_dir = out.string();
      req.quiet = true;
      run(req);
      dirs.push_back(out);
    }
    for (const auto& e : fs::recursive_directory_iterator(dirs[0])) {
      if (e.path().extension() != ".csv") continue;
      ++files;
      const fs::path other = dirs[1] / fs::relative(e.path(), dirs[0]);
      std::ifstream a(e.path(), std::ios::binary), b(other, std::ios::binary);
      const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
      identical += fs::exists(other) && sa == sb;
    }
    for (const auto& d : dirs) fs::remove_all(d);
  }
  return {files > 0 && identical == files,
          fmt("repro cifar-analog and cross-modal rerun with identical configs: %zu/%zu CSV files bitwise identical",
              identical, files)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> only;
  app.add_option("--only", only, "criterion numbers to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"error bound holds numerically", prop1_holds},
      {"misspecification term vanishes for the oracle", misspecification_term},
      {"estimator correctness by enumeration", estimator_enumeration},
      {"reduction identity", reduction_identity},
      {"clamp invariant", clamp_invariant},
      {"gradient correctness", gradient_check},
      {"sup-loss ordering", lemma_a1},
      {"image-analog ordering", cifar_ordering},
      {"eta trade-off direction", eta_tradeoff},
      {"scaling laws of the bound", scaling_laws},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("%s [%d] %s: %s\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), v.detail.c_str());
    std::fflush(stdout);
  }
  return failed;
}
