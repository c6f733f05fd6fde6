// End-to-end gradient check: encoder parameters -> embeddings -> batch loss.
// Shared by the objectives suite and the acceptance binary.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dcl/encoder.hpp"
#include "dcl/eta.hpp"
#include "dcl/experiments.hpp"
#include "dcl/objectives.hpp"
#include "dcl/scenarios.hpp"
#include "oracles.hpp"

namespace gradcheck {

struct Outcome {
  double worst = 0.0;
  std::size_t coords = 0;
  std::string label;
};

// Trial t cycles through (objective, eta variant) x handling mode, with
// extra positives (M = 3) and cross-modal batches mixed in.
inline Outcome run(std::uint64_t t, double h = 1e-5) {
  using namespace dcl;
  dcl::Rng rng = dcl::Rng(1000 + t);
  static const char* kVariants[] = {"CL", "DCL-constant", "DCL-oracle", "DCL-lm"};
  const int variant = static_cast<int>(t % 4);
  const auto kind = static_cast<HandlingKind>((t / 4) % 5);
  const bool cross = t % 3 == 2;
  const std::size_t m = t % 7 == 0 ? 3 : 1;

  MixtureSpec spec;
  if (cross) {
    CrossModalConfig c;
    c.dim = 4;
    c.num_tail = 3;
    c.templates_per_class = 2;
    c.filler_tokens = 3;
    c.filler_length = 2;
    spec = cross_modal_spec(c);
  } else {
    GaussianAnalogConfig g;
    g.num_classes = 4;
    g.num_subsampled = 2;
    g.dim = 4;
    g.r = 0.3;
    g.geometry_seed = t;
    spec = gaussian_analog_spec(g);
  }
  auto sp = std::make_shared<const MixtureSpec>(spec);

  EtaProvider eta = EtaProvider::constant(0.05 + 0.4 * rng.uniform());
  if (variant == 2) eta = EtaProvider::true_oracle(sp);
  if (variant == 3) {
    LmEtaConfig lc;
    lc.corpus_size = 300;
    lc.alpha = 0.5;
    eta = EtaProvider::lm_log_linear(0.3 + rng.uniform(), 0.1 + 0.3 * rng.uniform(),
                                     std::make_shared<const NGramLM>(fit_report_lm(spec, lc)));
  }

  EncoderConfig ec;
  ec.input_dim = static_cast<int>(spec.dim());
  ec.hidden = 5;
  ec.output_dim = 4;
  ec.vocab_size = cross ? spec.vocab_size : 0;
  ec.text_embed_dim = 3;
  ec.gamma = 0.8 + rng.uniform();
  ec.train_gamma = t % 2 == 1;
  EncoderParams params = EncoderParams::init(ec, rng);

  const std::size_t b = 6;
  std::vector<DataPoint> anchors, positives, extra;
  std::vector<double> etas;
  std::vector<int> labels;
  for (std::size_t i = 0; i < b; ++i) {
    const int c = sample_class(spec.class_dist, rng);
    DataPoint a = sample_conditional(spec, c, rng);
    DataPoint p = sample_conditional(spec, c, rng);
    if (cross) {
      p = a;
      p.tokens.reset();
      a.features.clear();
    }
    etas.push_back(variant == 0 ? 0.0 : eta.eta_of(a));
    anchors.push_back(a);
    positives.push_back(p);
    labels.push_back(c);
    if (m > 1)
      for (std::size_t k = 0; k < m; ++k) {
        DataPoint v = sample_conditional(spec, c, rng);
        v.tokens.reset();
        extra.push_back(v);
      }
  }
  auto ptrs = [](const std::vector<DataPoint>& v) {
    std::vector<const DataPoint*> out;
    for (const auto& x : v) out.push_back(&x);
    return out;
  };
  const auto pa = ptrs(anchors), pp = ptrs(positives), pv = ptrs(extra);
  const InputPath apath = cross ? InputPath::kText : InputPath::kFeatures;

  BatchLossConfig cfg;
  cfg.objective = variant == 0 ? Objective::kContrastive : Objective::kDebiased;
  cfg.handling.kind = kind;
  cfg.handling.threshold = 0.2 * rng.normal();
  cfg.handling.temperature = 0.5 + rng.uniform();
  cfg.handling.keep_count = 3;
  cfg.symmetrize = !cross && m == 1 && t % 8 == 5;

  auto evaluate = [&](const EncoderParams& ps, std::vector<double>* grad) {
    ForwardCache ca, cp, cv;
    const Eigen::MatrixXd ea = encode_batch(ps, apath, pa, &ca);
    const Eigen::MatrixXd ep = encode_batch(ps, InputPath::kFeatures, pp, &cp);
    Eigen::MatrixXd ev;
    BatchInputs in;
    in.anchors = &ea;
    in.positives = &ep;
    if (m > 1) {
      ev = encode_batch(ps, InputPath::kFeatures, pv, &cv);
      in.extra_positives = &ev;
      in.num_extra = m;
    }
    in.eta = etas;
    in.labels = labels;
    in.gamma = ps.gamma();
    const BatchLossResult res = batch_loss(cfg, in);
    if (grad) {
      grad->assign(ps.size(), 0.0);
      backward(ps, ca, res.d_anchors, *grad);
      backward(ps, cp, res.d_positives, *grad);
      if (m > 1) backward(ps, cv, res.d_extra, *grad);
      (*grad)[ps.gamma_index()] += res.d_gamma;
    }
    return res.loss;
  };

  std::vector<double> analytic;
  evaluate(params, &analytic);
  Outcome out;
  out.label = std::string(kVariants[variant]) + "/" + to_string(kind) + (cross ? "/cross" : "") +
              (m > 1 ? "/M3" : "") + (cfg.symmetrize ? "/sym" : "");
  const std::size_t last = ec.train_gamma ? params.size() : params.size() - 1;
  for (std::size_t i = 0; i < last; ++i) {
    EncoderParams q = params;
    const double x0 = q.values()[i];
    q.values()[i] = x0 + h;
    const double up = evaluate(q, nullptr);
    q.values()[i] = x0 - h;
    const double dn = evaluate(q, nullptr);
    out.worst = std::max(out.worst, oracle::rel_err((up - dn) / (2 * h), analytic[i]));
    ++out.coords;
  }
  return out;
}

}  // namespace gradcheck
