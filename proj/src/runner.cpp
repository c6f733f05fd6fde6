#include "dcl/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <sstream>

#include "dcl/bounds.hpp"
#include "dcl/error.hpp"
#include "dcl/eta.hpp"
#include "dcl/eval.hpp"
#include "dcl/experiments.hpp"
#include "dcl/scenarios.hpp"
#include "dcl/text.hpp"
#include "dcl/train.hpp"

namespace dcl {

namespace fs = std::filesystem;
using nlohmann::json;

std::string config_hash(const json& config) {
  const std::string canon = config.dump();  // object keys are kept sorted
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canon) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kMissingInput, "cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, "malformed JSON in '" + path + "': " + e.what());
  }
}

void apply_overrides(json& config, const json& overrides) {
  if (overrides.is_null()) return;
  if (!overrides.is_object()) fail(ErrorCode::kConfig, "overrides must be a JSON object of pointer -> value");
  for (const auto& [ptr, value] : overrides.items()) {
    try {
      config[json::json_pointer(ptr)] = value;
    } catch (const json::exception& e) {
      fail(ErrorCode::kConfig, "bad override '" + ptr + "': " + e.what());
    }
  }
}

MixtureSpec build_spec(const json& data) {
  try {
    const std::string kind = data.value("kind", std::string("gaussian_analog"));
    if (kind == "gaussian_analog") return gaussian_analog_spec(data.get<GaussianAnalogConfig>());
    if (kind == "cross_modal") return cross_modal_spec(data.get<CrossModalConfig>());
    if (kind == "spec") {
      MixtureSpec s = data.at("spec").get<MixtureSpec>();
      s.validate();
      return s;
    }
    fail(ErrorCode::kConfig, "unknown data kind '" + kind + "'");
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("malformed data config: ") + e.what());
  }
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::string& hash, const std::string& seed, const std::vector<std::string>& cols)
      : out_(path) {
    if (!out_) fail(ErrorCode::kIo, "cannot write '" + path.string() + "'");
    out_ << "# config_hash=" << hash << " seed=" << seed << " version=" << DCL_VERSION << "\n";
    row(cols);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

struct Context {
  json config;
  fs::path out;
  std::string hash;
  std::string seed;
  bool quiet = false;
  RunOutcome outcome;

  fs::path file(const std::string& name) {
    const fs::path p = out / name;
    outcome.outputs.push_back(p.string());
    return p;
  }
  void log(const std::string& msg) const {
    if (!quiet) std::cerr << "[dcl] " << msg << "\n";
  }
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

std::vector<const DataPoint*> pointers(const std::vector<DataPoint>& v) {
  std::vector<const DataPoint*> p;
  for (const auto& x : v) p.push_back(&x);
  return p;
}

std::string tokens_text(const std::optional<TokenSeq>& t) {
  std::string s;
  if (!t) return s;
  for (std::size_t i = 0; i < t->size(); ++i) s += (i ? " " : "") + std::to_string((*t)[i]);
  return s;
}

LmEtaConfig lm_config(const json& j) {
  LmEtaConfig c;
  c.a = j.value("a", c.a);
  c.k = j.value("k", c.k);
  c.alpha = j.value("alpha", c.alpha);
  c.length_normalize = j.value("length_normalize", c.length_normalize);
  c.corpus_size = j.value("corpus_size", c.corpus_size);
  return c;
}

EtaProvider build_eta(const json& j, const std::shared_ptr<const MixtureSpec>& spec) {
  if (j.is_null()) return EtaProvider::constant(0.0);
  std::shared_ptr<const NGramLM> lm;
  if (j.value("kind", std::string()) == "lm") lm = std::make_shared<const NGramLM>(fit_report_lm(*spec, lm_config(j)));
  return eta_from_json(j, spec, lm);
}

TrainConfig train_config(const json& config, const MixtureSpec& spec) {
  TrainConfig t;
  if (config.contains("train")) from_json(config.at("train"), t);
  t.encoder.input_dim = static_cast<int>(spec.dim());
  if (t.mode == TrainMode::kCrossModal && t.encoder.vocab_size <= 0) t.encoder.vocab_size = spec.vocab_size;
  return t;
}

// --- simulate ---------------------------------------------------------------------

void cmd_simulate(Context& ctx) {
  const MixtureSpec spec = build_spec(ctx.config.value("data", json::object()));
  const auto n = ctx.config.value("n", std::size_t{1000});
  Rng rng(ctx.config.value("seed", std::uint64_t{0}));
  std::vector<DataPoint> pts;
  std::vector<TokenSeq> corpus;
  for (std::size_t i = 0; i < n; ++i) {
    pts.push_back(sample_marginal(spec, rng));
    corpus.push_back(*pts.back().tokens);
  }
  std::vector<std::string> cols{"index", "class", "template", "point_index"};
  for (std::size_t d = 0; d < spec.dim(); ++d) cols.push_back("f" + std::to_string(d));
  cols.push_back("tokens");
  CsvWriter data(ctx.file("dataset.csv"), ctx.hash, ctx.seed, cols);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = pts[i];
    std::vector<std::string> row{std::to_string(i), std::to_string(p.latent_class), std::to_string(p.template_id),
                                 std::to_string(p.point_index)};
    for (double f : p.features) row.push_back(num(f));
    row.push_back(tokens_text(p.tokens));
    data.row(row);
  }
  const json lmj = ctx.config.value("lm", json::object());
  const NGramLM lm = fit_ngram(corpus, lmj.value("alpha", 0.1), spec.vocab_size);
  CsvWriter pll(ctx.file("pll.csv"), ctx.hash, ctx.seed, {"index", "class", "pll"});
  for (std::size_t i = 0; i < n; ++i)
    pll.row({std::to_string(i), std::to_string(pts[i].latent_class), num(lm.pseudo_log_likelihood(corpus[i]))});
  json lm_out;
  to_json(lm_out, lm);
  write_json(ctx.file("lm.json"), lm_out);
}

// --- train / eval -------------------------------------------------------------------

json cmd_train(Context& ctx) {
  auto spec = std::make_shared<const MixtureSpec>(build_spec(ctx.config.value("data", json::object())));
  const TrainConfig tcfg = train_config(ctx.config, *spec);
  const EtaProvider eta = build_eta(ctx.config.value("eta", json()), spec);
  ctx.log("training " + std::to_string(tcfg.total_steps()) + " steps");
  const TrainResult res = train(*spec, tcfg, eta);
  CsvWriter trace(ctx.file("loss_trace.csv"), ctx.hash, ctx.seed, {"step", "loss", "clamp_fraction", "mean_eta"});
  for (const auto& r : res.trace)
    trace.row({std::to_string(r.step), num(r.loss), num(r.clamp_fraction), num(r.mean_eta)});
  const fs::path stem = ctx.out / "checkpoint";
  save_checkpoint(res.params, {tcfg.seed, tcfg.total_steps(), ctx.hash}, stem.string());
  ctx.outcome.outputs.push_back(stem.string() + ".bin");
  ctx.outcome.outputs.push_back(stem.string() + ".json");
  return {{"final_loss", res.trace.empty() ? 0.0 : res.trace.back().loss}};
}

json cmd_eval(Context& ctx) {
  const json data = ctx.config.value("data", json::object());
  const MixtureSpec spec = build_spec(data);
  const json ej = ctx.config.value("eval", json::object());
  const std::string stem = ej.value("checkpoint", (ctx.out / "checkpoint").string());
  if (!fs::exists(stem + ".bin")) fail(ErrorCode::kMissingInput, "checkpoint '" + stem + ".bin' not found");
  const EncoderParams params = load_checkpoint(stem);
  const std::uint64_t seed = ej.value("seed", std::uint64_t{0});
  const auto pool_n = ej.value("probe_pool", std::size_t{5000});
  const auto test_n = ej.value("test_size", std::size_t{5000});
  const auto fractions = ej.value("label_fractions", std::vector<double>{0.01, 0.1, 1.0});

  MixtureSpec uniform = spec;
  uniform.class_dist =
      ClassDistribution(std::vector<double>(spec.num_classes(), 1.0 / static_cast<double>(spec.num_classes())));
  const Rng base = Rng(seed).split(2);
  auto draw = [&](const MixtureSpec& s, std::size_t n, Rng rng) {
    std::vector<DataPoint> pts;
    std::vector<int> labels;
    for (std::size_t i = 0; i < n; ++i) {
      pts.push_back(sample_marginal(s, rng));
      labels.push_back(pts.back().latent_class);
    }
    return std::make_pair(pts, labels);
  };
  const auto [pool, pool_y] = draw(uniform, pool_n, base.split(0));
  const auto [test, test_y] = draw(uniform, test_n, base.split(1));
  const Eigen::MatrixXd ep = encode_batch(params, InputPath::kFeatures, pointers(pool));
  const Eigen::MatrixXd et = encode_batch(params, InputPath::kFeatures, pointers(test));
  const int k = static_cast<int>(spec.num_classes());

  json report;
  report["mean_classifier_acc"] = mean_classifier_accuracy(ep, pool_y, et, test_y, k);
  json probes = json::array();
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const ProbeResult pr = linear_probe(ep, pool_y, et, test_y, k, fractions[i], base.split(10 + i).next_u64());
    probes.push_back({{"label_fraction", fractions[i]}, {"linear_probe_acc", pr.accuracy}, {"labeled", pr.labeled}});
  }
  report["linear_probe"] = probes;

  const Projection proj = project_2d(et);
  CsvWriter pc(ctx.file("projection.csv"), ctx.hash, ctx.seed, {"index", "class", "pc1", "pc2"});
  for (Eigen::Index i = 0; i < et.cols(); ++i)
    pc.row({std::to_string(i), std::to_string(test_y[static_cast<std::size_t>(i)]), num(proj.coords(i, 0)),
            num(proj.coords(i, 1))});
  report["projection_explained_variance"] = {proj.explained[0], proj.explained[1]};

  if (params.has_text()) {
    const auto n = ej.value("eval_size", std::size_t{1000});
    const auto ks = ej.value("ks", std::vector<int>{10, 50, 100});
    const auto [set, set_y] = draw(spec, n, base.split(3));
    std::vector<TokenSeq> texts;
    for (const auto& p : set) texts.push_back(*p.tokens);
    const Eigen::MatrixXd qt = encode_tokens(params, texts);
    const Eigen::MatrixXd gi = encode_batch(params, InputPath::kFeatures, pointers(set));
    std::vector<std::size_t> pairing(n);
    for (std::size_t i = 0; i < n; ++i) pairing[i] = i;
    const RetrievalReport rr = retrieval_metrics(qt, gi, pairing, ks);
    report["retrieval"] = rr;
    CsvWriter ranks(ctx.file("ranks.csv"), ctx.hash, ctx.seed, {"query", "class", "rank_text_to_image", "rank_image_to_text"});
    for (std::size_t i = 0; i < n; ++i)
      ranks.row({std::to_string(i), std::to_string(set_y[i]), std::to_string(rr.ranks_q2g[i]),
                 std::to_string(rr.ranks_g2q[i])});
  }
  report["label_fractions"] = fractions;
  write_json(ctx.file("eval_report.json"), report);
  return report;
}

// --- verify-bounds ----------------------------------------------------------------------

void cmd_verify_bounds(Context& ctx) {
  const json& c = ctx.config;
  const auto num_configs = c.value("num_configs", std::size_t{60});
  const auto n_grid = c.value("n_grid", std::vector<std::size_t>{4, 16, 64, 256});
  const auto m_grid = c.value("m_grid", std::vector<std::size_t>{1, 4, 16});
  const auto etas = c.value("etas", std::vector<std::string>{"constant:0.05", "constant:0.5", "true_oracle", "lm"});
  const auto min_trials = c.value("min_trials", std::size_t{100});
  const json lmj = c.value("lm", json{{"a", 0.5}, {"k", 0.2}, {"alpha", 0.5}, {"corpus_size", 2000}});
  RandomDiscreteConfig rcfg;
  if (c.contains("random_spec")) {
    const auto& r = c.at("random_spec");
    rcfg.min_classes = r.value("min_classes", rcfg.min_classes);
    rcfg.max_classes = r.value("max_classes", rcfg.max_classes);
    rcfg.min_alphabet = r.value("min_alphabet", rcfg.min_alphabet);
    rcfg.max_alphabet = r.value("max_alphabet", rcfg.max_alphabet);
    rcfg.dim = r.value("dim", rcfg.dim);
    rcfg.vocab_size = r.value("vocab_size", rcfg.vocab_size);
  }
  EncoderConfig ecfg;
  ecfg.input_dim = rcfg.dim;
  ecfg.hidden = c.value("/encoder/hidden"_json_pointer, 16);
  ecfg.output_dim = c.value("/encoder/output_dim"_json_pointer, 8);
  ecfg.gamma = c.value("/encoder/gamma"_json_pointer, 1.0);
  if (n_grid.empty() || m_grid.empty() || etas.empty()) fail(ErrorCode::kConfig, "verify-bounds grids must be non-empty");

  const Rng root(c.value("seed", std::uint64_t{0}));
  CsvWriter csv(ctx.file("bounds.csv"), ctx.hash, ctx.seed,
                {"config", "classes", "alphabet", "eta", "N", "M", "trials", "l_tilde", "l_clamped", "lhs", "lhs_stderr",
                 "lhs_unclamped", "term_N", "term_M", "term_eta", "rhs_total", "rhs_statement", "holds",
                 "holds_statement", "holds_unclamped"});
  CsvWriter lemma(ctx.file("lemma.csv"), ctx.hash, ctx.seed,
                  {"config", "classes", "N", "K", "l_sup", "l_sup_mu", "l_tilde", "converged", "holds"});
  json reports = json::array();
  for (std::size_t i = 0; i < num_configs; ++i) {
    Rng rng = root.split(i);
    auto spec = std::make_shared<const MixtureSpec>(random_discrete_spec(rcfg, rng));
    Rng init = rng.split(1);
    const EncoderParams params = EncoderParams::init(ecfg, init);
    const std::string& ek = etas[i % etas.size()];
    EtaProvider eta;
    if (ek.rfind("constant:", 0) == 0) eta = EtaProvider::constant(std::stod(ek.substr(9)));
    else if (ek == "true_oracle") eta = EtaProvider::true_oracle(spec);
    else if (ek == "lm") {
      json ej = lmj;
      ej["kind"] = "lm";
      eta = build_eta(ej, spec);
    }
    else fail(ErrorCode::kConfig, "unknown eta entry '" + ek + "'");
    const std::size_t n = n_grid[rng.below(n_grid.size())];
    const std::size_t m = m_grid[rng.below(m_grid.size())];
    Rng mc = rng.split(2);
    const BoundReport r = verify_prop1(*spec, params, eta, n, m, mc, min_trials);
    ctx.outcome.check_passed = ctx.outcome.check_passed && r.holds;
    csv.row({std::to_string(i), std::to_string(spec->num_classes()), std::to_string(spec->alphabet.size()), ek,
             std::to_string(n), std::to_string(m), std::to_string(r.gap.trials), num(r.gap.l_tilde),
             num(r.gap.l_clamped), num(r.lhs), num(r.lhs_stderr), num(r.gap.gap_unclamped), num(r.proof.term_n),
             num(r.proof.term_m), num(r.proof.term_eta), num(r.rhs_total), num(r.statement.total),
             r.holds ? "true" : "false", r.holds_statement ? "true" : "false", r.holds_unclamped ? "true" : "false"});
    json rj = r;
    rj["config"] = i;
    reports.push_back(rj);

    const double threshold = std::ceil(lemma_a1_threshold(spec->class_dist) - 1e-9);
    const SupLossReport s = lemma_a1_check(*spec, params, threshold);
    ctx.outcome.check_passed = ctx.outcome.check_passed && s.holds;
    lemma.row({std::to_string(i), std::to_string(spec->num_classes()), num(threshold), std::to_string(s.k),
               num(s.l_sup), num(s.l_sup_mu), num(s.l_tilde), s.converged ? "true" : "false",
               s.holds ? "true" : "false"});
    ctx.log("bounds config " + std::to_string(i) + (r.holds && s.holds ? " ok" : " VIOLATED"));
  }
  write_json(ctx.file("bounds.json"), reports);
  const LipschitzFactors lf = lipschitz_factors(static_cast<double>(n_grid.back()), static_cast<double>(m_grid.back()),
                                                kEtaMaxDefault, 0.0);
  write_json(ctx.file("lipschitz.json"), {{"N", n_grid.back()},
                                         {"M", m_grid.back()},
                                         {"eta_max", kEtaMaxDefault},
                                         {"L_omega", lf.l_omega},
                                         {"L_psi", lf.l_psi},
                                         {"L_ell", lf.l_ell},
                                         {"L_phi", lf.l_phi},
                                         {"B", lf.b}});
}

// --- sweep -----------------------------------------------------------------------------

void cmd_sweep(Context& ctx) {
  const json base = ctx.config.value("base", json::object());
  const json grid = ctx.config.value("grid", json::object());
  std::vector<std::pair<std::string, json>> axes;
  for (const auto& [ptr, values] : grid.items()) {
    if (!values.is_array() || values.empty()) fail(ErrorCode::kConfig, "sweep axis '" + ptr + "' needs a non-empty list");
    axes.emplace_back(ptr, values);
  }
  std::size_t cells = 1;
  for (const auto& a : axes) cells *= a.second.size();

  std::vector<std::string> cols{"cell", "cell_hash"};
  for (const auto& a : axes) cols.push_back(a.first);
  const auto fractions = base.value("/eval/label_fractions"_json_pointer, std::vector<double>{0.01, 0.1, 1.0});
  cols.push_back("final_loss");
  cols.push_back("mean_classifier_acc");
  for (double f : fractions) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "probe_acc_%g", f);
    cols.push_back(buf);
  }
  cols.push_back("avg_recall");
  CsvWriter csv(ctx.file("sweep.csv"), ctx.hash, ctx.seed, cols);

  for (std::size_t cell = 0; cell < cells; ++cell) {
    json cfg = base;
    std::vector<std::string> row{std::to_string(cell)};
    std::vector<std::string> values;
    std::size_t rem = cell;
    for (const auto& [ptr, vals] : axes) {
      const json& v = vals[rem % vals.size()];
      rem /= vals.size();
      cfg[json::json_pointer(ptr)] = v;
      values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    }
    char dir[32];
    std::snprintf(dir, sizeof dir, "cell_%04zu", cell);
    Context sub{cfg, ctx.out / dir, config_hash(cfg), ctx.seed, true, {}};
    sub.seed = num(static_cast<double>(cfg.value("/train/seed"_json_pointer, std::uint64_t{0})));
    fs::create_directories(sub.out);
    ctx.log("sweep cell " + std::to_string(cell + 1) + "/" + std::to_string(cells));
    const json tr = cmd_train(sub);
    const json ev = cmd_eval(sub);
    write_json(sub.out / "manifest.json", {{"config_hash", sub.hash},
                                           {"seed", sub.seed},
                                           {"version", DCL_VERSION},
                                           {"config", cfg},
                                           {"outputs", sub.outcome.outputs}});
    row.push_back(sub.hash);
    for (auto& v : values) {
      if (v.find_first_of(",\"\n") == std::string::npos) {
        row.push_back(v);
        continue;
      }
      std::string q = "\"";
      for (char ch : v) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
      row.push_back(q + "\"");
    }
    row.push_back(num(tr.at("final_loss").get<double>()));
    row.push_back(num(ev.at("mean_classifier_acc").get<double>()));
    for (const auto& p : ev.at("linear_probe")) row.push_back(num(p.at("linear_probe_acc").get<double>()));
    row.push_back(ev.contains("retrieval") ? num(ev.at("retrieval").at("avg_recall").get<double>()) : "nan");
    csv.row(row);
    for (auto& o : sub.outcome.outputs) ctx.outcome.outputs.push_back(o);
  }
}

// --- repro --------------------------------------------------------------------------------

void cmd_repro_cifar(Context& ctx) {
  const CifarAnalogConfig cfg = ctx.config.get<CifarAnalogConfig>();
  const auto rows = run_cifar_analog(cfg, [&](const std::string& m) { ctx.log(m); });
  CsvWriter runs(ctx.file("cifar_runs.csv"), ctx.hash, ctx.seed,
                 {"r", "variant", "seed", "label_fraction", "linear_probe_acc", "mean_classifier_acc"});
  // (r, variant, label_fraction) -> mean accuracy over seeds
  std::map<std::tuple<double, std::string, double>, std::pair<double, int>> mean;
  for (const auto& r : rows) {
    runs.row({num(r.r), r.variant, std::to_string(r.seed), num(r.label_fraction), num(r.accuracy),
              num(r.mean_classifier_accuracy)});
    auto& m = mean[{r.r, r.variant, r.label_fraction}];
    m.first += r.accuracy;
    ++m.second;
  }
  auto avg = [&](double r, const std::string& v, double lf) {
    const auto& m = mean.at({r, v, lf});
    return m.first / m.second;
  };
  std::vector<std::string> cols{"r"};
  for (const auto& v : cfg.variants) cols.push_back(v);
  const double full = cfg.label_fractions.back();
  CsvWriter by_r(ctx.file("cifar_accuracy_by_r.csv"), ctx.hash, ctx.seed, cols);
  for (double r : cfg.r_grid) {
    std::vector<std::string> row{num(r)};
    for (const auto& v : cfg.variants) row.push_back(num(avg(r, v, full)));
    by_r.row(row);
  }
  double table_r = ctx.config.value("label_fraction_table_r", 0.5);
  if (std::find(cfg.r_grid.begin(), cfg.r_grid.end(), table_r) == cfg.r_grid.end()) table_r = cfg.r_grid.front();
  cols[0] = "label_fraction";
  CsvWriter by_lf(ctx.file("cifar_accuracy_by_label_fraction.csv"), ctx.hash, ctx.seed, cols);
  for (double lf : cfg.label_fractions) {
    std::vector<std::string> row{num(lf)};
    for (const auto& v : cfg.variants) row.push_back(num(avg(table_r, v, lf)));
    by_lf.row(row);
  }
}

void cmd_repro_cross_modal(Context& ctx) {
  const CrossModalExperimentConfig cfg = ctx.config.get<CrossModalExperimentConfig>();
  const auto rows = run_cross_modal(cfg, [&](const std::string& m) { ctx.log(m); });
  CsvWriter runs(ctx.file("cross_modal_runs.csv"), ctx.hash, ctx.seed,
                 {"variant", "eta", "seed", "head_prompt_acc", "tail_avg_recall", "all_avg_recall", "medr"});
  std::map<std::string, std::array<double, 4>> sums;
  std::vector<std::string> order;
  for (const auto& r : rows) {
    runs.row({r.variant, num(r.eta), std::to_string(r.seed), num(r.head_prompt_accuracy), num(r.tail_avg_recall),
              num(r.all_avg_recall), num(r.medr)});
    if (!sums.contains(r.variant)) order.push_back(r.variant);
    auto& s = sums[r.variant];
    s[0] += r.head_prompt_accuracy;
    s[1] += r.tail_avg_recall;
    s[2] += r.all_avg_recall;
    s[3] += 1.0;
  }
  CsvWriter summary(ctx.file("cross_modal_summary.csv"), ctx.hash, ctx.seed,
                    {"variant", "head_prompt_acc", "tail_avg_recall", "all_avg_recall"});
  for (const auto& v : order) {
    const auto& s = sums[v];
    summary.row({v, num(s[0] / s[3]), num(s[1] / s[3]), num(s[2] / s[3])});
  }
}

std::string seed_label(const json& c) {
  if (c.contains("seeds")) return c.at("seeds").dump();
  if (c.contains("seed")) return c.at("seed").dump();
  if (c.contains("/train/seed"_json_pointer)) return c.at("/train/seed"_json_pointer).dump();
  return "0";
}

}  // namespace

json default_repro_config(const std::string& target) {
  if (target == "cifar-analog") return CifarAnalogConfig{};
  if (target == "cross-modal") return CrossModalExperimentConfig{};
  fail(ErrorCode::kInvalidArgument, "unknown repro target '" + target + "' (expected cifar-analog or cross-modal)");
}

RunOutcome run(const RunRequest& req) {
  const auto t0 = std::chrono::steady_clock::now();
  Context ctx{req.config, fs::path(req.output_dir.empty() ? "." : req.output_dir), config_hash(req.config),
              seed_label(req.config), req.quiet, {}};
  static const std::vector<std::string> known{"simulate", "train", "eval", "verify-bounds", "sweep", "repro"};
  if (std::find(known.begin(), known.end(), req.subcommand) == known.end())
    fail(ErrorCode::kInvalidArgument, "unknown subcommand '" + req.subcommand + "'");
  if (req.subcommand == "repro" && req.target != "cifar-analog" && req.target != "cross-modal")
    fail(ErrorCode::kInvalidArgument, "unknown repro target '" + req.target + "' (expected cifar-analog or cross-modal)");
  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create output directory '" + ctx.out.string() + "'");

  if (req.subcommand == "simulate") cmd_simulate(ctx);
  else if (req.subcommand == "train") cmd_train(ctx);
  else if (req.subcommand == "eval") cmd_eval(ctx);
  else if (req.subcommand == "verify-bounds") cmd_verify_bounds(ctx);
  else if (req.subcommand == "sweep") cmd_sweep(ctx);
  else if (req.target == "cifar-analog") cmd_repro_cifar(ctx);
  else cmd_repro_cross_modal(ctx);

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::string name = req.subcommand == "repro" ? "repro " + req.target : req.subcommand;
  write_json(ctx.out / "manifest.json", {{"subcommand", name},
                                         {"config_hash", ctx.hash},
                                         {"seed", ctx.seed},
                                         {"version", DCL_VERSION},
                                         {"config", req.config},
                                         {"outputs", ctx.outcome.outputs},
                                         {"timing_seconds", secs}});
  ctx.outcome.outputs.push_back((ctx.out / "manifest.json").string());
  return ctx.outcome;
}

}  // namespace dcl
