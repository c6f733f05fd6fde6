#include "dcl/dcl.h"

#include <cstdlib>
#include <exception>
#include <memory>
#include <span>
#include <set>
#include <string>

#include "dcl/bounds.hpp"
#include "dcl/encoder.hpp"
#include "dcl/error.hpp"
#include "dcl/eta.hpp"
#include "dcl/objectives.hpp"
#include "dcl/runner.hpp"

struct dcl_spec {
  std::shared_ptr<const dcl::MixtureSpec> spec;
};

struct dcl_encoder {
  dcl::EncoderParams params;
};

namespace {

thread_local std::string g_last_error;

template <class F>
dcl_status guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return DCL_OK;
  } catch (const dcl::Error& e) {
    g_last_error = e.what();
    return static_cast<dcl_status>(e.code());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = e.what();
    return DCL_ERR_CONFIG;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return DCL_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DCL_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return DCL_ERR_INTERNAL;
  }
}

void need(const void* p, const char* name) {
  if (!p) dcl::fail(dcl::ErrorCode::kInvalidArgument, std::string(name) + " is null");
}

dcl::EstimatorInputs inputs(double pos, const double* neg, const double* w, size_t n, const double* v, size_t m,
                            double eta, double gamma) {
  if (n > 0) need(neg, "neg_scores");
  if (m > 0) need(v, "pos_set");
  dcl::EstimatorInputs in;
  in.pos_score = pos;
  in.neg_scores = std::span<const double>(neg, n);
  if (w) in.neg_weights = std::span<const double>(w, n);
  in.pos_set_scores = std::span<const double>(v, m);
  in.eta = eta;
  in.gamma = gamma;
  return in;
}

}  // namespace

extern "C" {

const char* dcl_version(void) { return DCL_VERSION; }

const char* dcl_last_error_message(void) { return g_last_error.c_str(); }

dcl_status dcl_spec_from_json(const char* data_json, dcl_spec** out) {
  return guarded([&] {
    need(data_json, "data_json");
    need(out, "out");
    *out = nullptr;
    auto s = std::make_shared<const dcl::MixtureSpec>(dcl::build_spec(nlohmann::json::parse(data_json)));
    *out = new dcl_spec{std::move(s)};
  });
}

void dcl_spec_free(dcl_spec* spec) { delete spec; }

dcl_status dcl_spec_num_classes(const dcl_spec* spec, size_t* out) {
  return guarded([&] {
    need(spec, "spec");
    need(out, "out");
    *out = spec->spec->num_classes();
  });
}

dcl_status dcl_spec_dim(const dcl_spec* spec, size_t* out) {
  return guarded([&] {
    need(spec, "spec");
    need(out, "out");
    *out = spec->spec->dim();
  });
}

dcl_status dcl_spec_sample(const dcl_spec* spec, uint64_t seed, size_t n, int* classes, double* features) {
  return guarded([&] {
    need(spec, "spec");
    if (n > 0) {
      need(classes, "classes");
      need(features, "features");
    }
    const size_t d = spec->spec->dim();
    dcl::Rng rng(seed);
    for (size_t i = 0; i < n; ++i) {
      const dcl::DataPoint p = dcl::sample_marginal(*spec->spec, rng);
      classes[i] = p.latent_class;
      for (size_t k = 0; k < d; ++k) features[i * d + k] = p.features[k];
    }
  });
}

dcl_status dcl_contrastive_loss(double pos_score, const double* neg_scores, const double* neg_weights, size_t num_neg,
                                double* out) {
  return guarded([&] {
    need(out, "out");
    *out = dcl::contrastive_loss(inputs(pos_score, neg_scores, neg_weights, num_neg, nullptr, 0, 0.0, 1.0));
  });
}

dcl_status dcl_g_estimate(const double* neg_scores, const double* neg_weights, size_t num_neg, const double* pos_set,
                          size_t num_pos_set, double eta, double gamma, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = dcl::g_estimate(inputs(0.0, neg_scores, neg_weights, num_neg, pos_set, num_pos_set, eta, gamma));
  });
}

dcl_status dcl_debiased_loss(double pos_score, const double* neg_scores, const double* neg_weights, size_t num_neg,
                             const double* pos_set, size_t num_pos_set, double eta, double gamma, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = dcl::debiased_loss(inputs(pos_score, neg_scores, neg_weights, num_neg, pos_set, num_pos_set, eta, gamma));
  });
}

dcl_status dcl_encoder_load(const char* checkpoint_stem, dcl_encoder** out) {
  return guarded([&] {
    need(checkpoint_stem, "checkpoint_stem");
    need(out, "out");
    *out = nullptr;
    *out = new dcl_encoder{dcl::load_checkpoint(checkpoint_stem)};
  });
}

void dcl_encoder_free(dcl_encoder* enc) { delete enc; }

dcl_status dcl_encoder_input_dim(const dcl_encoder* enc, size_t* out) {
  return guarded([&] {
    need(enc, "encoder");
    need(out, "out");
    *out = static_cast<size_t>(enc->params.config().input_dim);
  });
}

dcl_status dcl_encoder_output_dim(const dcl_encoder* enc, size_t* out) {
  return guarded([&] {
    need(enc, "encoder");
    need(out, "out");
    *out = static_cast<size_t>(enc->params.config().output_dim);
  });
}

dcl_status dcl_encoder_encode(const dcl_encoder* enc, const double* features, size_t n, double* out) {
  return guarded([&] {
    need(enc, "encoder");
    if (n == 0) return;
    need(features, "features");
    need(out, "out");
    const auto din = static_cast<Eigen::Index>(enc->params.config().input_dim);
    const auto dout = static_cast<Eigen::Index>(enc->params.config().output_dim);
    // Row-major n x d in memory is column-major d x n.
    const Eigen::Map<const Eigen::MatrixXd> x(features, din, static_cast<Eigen::Index>(n));
    Eigen::Map<Eigen::MatrixXd>(out, dout, static_cast<Eigen::Index>(n)) = dcl::encode_features(enc->params, x);
  });
}

dcl_status dcl_prop1_rhs(const dcl_spec* spec, double eta, double n, double m, int statement_constants,
                         double* term_n, double* term_m, double* term_eta, double* total) {
  return guarded([&] {
    need(spec, "spec");
    const dcl::EtaProvider provider =
        eta < 0.0 ? dcl::EtaProvider::true_oracle(spec->spec) : dcl::EtaProvider::constant(eta);
    const dcl::Prop1Terms t = dcl::prop1_rhs(*spec->spec, provider, n, m,
                                             statement_constants ? dcl::BoundConstants::kStatement
                                                                 : dcl::BoundConstants::kProof);
    if (term_n) *term_n = t.term_n;
    if (term_m) *term_m = t.term_m;
    if (term_eta) *term_eta = t.term_eta;
    if (total) *total = t.total;
  });
}

dcl_status dcl_run(const char* subcommand, const char* target, const char* config_path, const char* out_dir,
                   const char* overrides_json, int quiet) {
  bool passed = true;
  const dcl_status st = guarded([&] {
    need(subcommand, "subcommand");
    dcl::RunRequest req;
    req.subcommand = subcommand;
    req.target = target ? target : "";
    static const std::set<std::string> known{"simulate", "train", "eval", "verify-bounds", "sweep", "repro"};
    if (!known.count(req.subcommand))
      dcl::fail(dcl::ErrorCode::kInvalidArgument, "unknown subcommand '" + req.subcommand + "'");
    if (config_path && *config_path) {
      req.config = dcl::load_json_file(config_path);
    } else if (req.subcommand == "repro") {
      req.config = dcl::default_repro_config(req.target);
    } else {
      dcl::fail(dcl::ErrorCode::kMissingInput, "subcommand '" + req.subcommand + "' needs a config file");
    }
    if (overrides_json && *overrides_json) dcl::apply_overrides(req.config, nlohmann::json::parse(overrides_json));
    if (out_dir && *out_dir) {
      req.output_dir = out_dir;
    } else if (const char* env = std::getenv("DCL_OUTPUT_ROOT"); env && *env) {
      req.output_dir = env;
    } else {
      req.output_dir = "out";
    }
    req.quiet = quiet != 0;
    passed = dcl::run(req).check_passed;
  });
  if (st == DCL_OK && !passed) {
    g_last_error = "bound check failed in at least one row (see bounds.csv / lemma.csv)";
    return DCL_ERR_CHECK_FAILED;
  }
  return st;
}

}  // extern "C"
