#include "dcl/train.hpp"

#include <cmath>
#include <sstream>

#include "dcl/error.hpp"

namespace dcl {

std::size_t TrainConfig::steps_per_epoch() const {
  return std::max<std::size_t>(1, samples_per_epoch / std::max<std::size_t>(1, batch_size));
}

void TrainConfig::validate() const {
  if (batch_size < 2) fail(ErrorCode::kConfig, "batch_size must be >= 2");
  if (num_negatives > batch_size - 1) fail(ErrorCode::kConfig, "N must be <= batch_size - 1 for in-batch negatives");
  if (num_positives < 1) fail(ErrorCode::kConfig, "M must be >= 1");
  if (symmetrize && num_positives > 1) fail(ErrorCode::kConfig, "symmetrize requires M = 1");
  if (symmetrize && mode != TrainMode::kCrossModal) fail(ErrorCode::kConfig, "symmetrize applies to cross-modal mode");
  if (!(augment_stddev >= 0.0)) fail(ErrorCode::kConfig, "augment_stddev must be >= 0");
  if (mode == TrainMode::kCrossModal && encoder.vocab_size <= 0)
    fail(ErrorCode::kConfig, "cross-modal training needs encoder.vocab_size > 0");
  handling.validate();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"objective", to_string(c.objective)},
       {"handling",
        {{"kind", to_string(c.handling.kind)},
         {"threshold", std::isfinite(c.handling.threshold) ? nlohmann::json(c.handling.threshold) : nlohmann::json(nullptr)},
         {"temperature", c.handling.temperature},
         {"keep_count", c.handling.keep_count}}},
       {"batch_size", c.batch_size},
       {"num_negatives", c.num_negatives},
       {"num_positives", c.num_positives},
       {"optimizer",
        {{"kind", to_string(c.optimizer.kind)},
         {"lr", c.optimizer.lr},
         {"weight_decay", c.optimizer.weight_decay},
         {"beta1", c.optimizer.beta1},
         {"beta2", c.optimizer.beta2},
         {"eps", c.optimizer.eps},
         {"momentum", c.optimizer.momentum}}},
       {"epochs", c.epochs},
       {"samples_per_epoch", c.samples_per_epoch},
       {"cosine", c.cosine},
       {"warmup_steps", c.warmup_steps},
       {"seed", c.seed},
       {"mode", c.mode == TrainMode::kCrossModal ? "cross_modal" : "unimodal"},
       {"symmetrize", c.symmetrize},
       {"augment_stddev", c.augment_stddev},
       {"encoder", c.encoder}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  try {
    if (j.contains("objective")) c.objective = objective_from_string(j.at("objective").get<std::string>());
    if (j.contains("handling")) {
      const auto& h = j.at("handling");
      if (h.contains("kind")) c.handling.kind = handling_from_string(h.at("kind").get<std::string>());
      if (h.contains("threshold") && !h.at("threshold").is_null()) c.handling.threshold = h.at("threshold").get<double>();
      c.handling.temperature = h.value("temperature", c.handling.temperature);
      c.handling.keep_count = h.value("keep_count", c.handling.keep_count);
    }
    c.batch_size = j.value("batch_size", c.batch_size);
    c.num_negatives = j.value("num_negatives", c.num_negatives);
    c.num_positives = j.value("num_positives", c.num_positives);
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      if (o.contains("kind")) c.optimizer.kind = optimizer_from_string(o.at("kind").get<std::string>());
      c.optimizer.lr = o.value("lr", c.optimizer.lr);
      c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
      c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
      c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
      c.optimizer.eps = o.value("eps", c.optimizer.eps);
      c.optimizer.momentum = o.value("momentum", c.optimizer.momentum);
    }
    c.epochs = j.value("epochs", c.epochs);
    c.samples_per_epoch = j.value("samples_per_epoch", c.samples_per_epoch);
    c.cosine = j.value("cosine", c.cosine);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.seed = j.value("seed", c.seed);
    if (j.contains("mode")) {
      const auto m = j.at("mode").get<std::string>();
      if (m == "unimodal") c.mode = TrainMode::kUnimodal;
      else if (m == "cross_modal") c.mode = TrainMode::kCrossModal;
      else fail(ErrorCode::kConfig, "unknown training mode '" + m + "'");
    }
    c.symmetrize = j.value("symmetrize", c.symmetrize);
    c.augment_stddev = j.value("augment_stddev", c.augment_stddev);
    if (j.contains("encoder")) from_json(j.at("encoder"), c.encoder);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("malformed training config: ") + e.what());
  }
}

Rng batch_rng(std::uint64_t seed, std::size_t step) { return Rng(seed).split(1).split(step); }

namespace {

struct Batch {
  std::vector<DataPoint> anchors, positives, extra;
  std::vector<double> eta;
  std::vector<int> labels;
};

Batch draw_batch(const MixtureSpec& spec, const TrainConfig& cfg, const EtaProvider& eta, Rng& rng) {
  Batch b;
  const std::size_t n = cfg.batch_size;
  const std::size_t m = cfg.num_positives;
  b.anchors.reserve(n);
  b.positives.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = sample_class(spec.class_dist, rng);
    if (cfg.mode == TrainMode::kCrossModal) {
      DataPoint record = sample_conditional(spec, c, rng);
      DataPoint image = record;
      image.tokens.reset();
      record.features.clear();
      b.anchors.push_back(std::move(record));
      b.positives.push_back(std::move(image));
    } else if (cfg.augment_stddev > 0.0) {
      const DataPoint base = sample_conditional(spec, c, rng);
      for (auto* views : {&b.anchors, &b.positives}) {
        DataPoint v = base;
        for (double& f : v.features) f += cfg.augment_stddev * rng.normal();
        views->push_back(std::move(v));
      }
    } else {
      b.anchors.push_back(sample_conditional(spec, c, rng));
      b.positives.push_back(sample_conditional(spec, c, rng));
    }
    if (m > 1)
      for (std::size_t k = 0; k < m; ++k) {
        DataPoint v = sample_conditional(spec, c, rng);
        if (cfg.mode == TrainMode::kCrossModal) v.tokens.reset();
        b.extra.push_back(std::move(v));
      }
    b.labels.push_back(c);
    b.eta.push_back(cfg.objective == Objective::kDebiased ? eta.eta_of(b.anchors.back()) : 0.0);
  }
  return b;
}

std::vector<const DataPoint*> pointers(const std::vector<DataPoint>& v) {
  std::vector<const DataPoint*> p;
  p.reserve(v.size());
  for (const auto& x : v) p.push_back(&x);
  return p;
}

}  // namespace

TrainResult train(const MixtureSpec& spec, const TrainConfig& cfg, const EtaProvider& eta) {
  cfg.validate();
  spec.validate();
  if (static_cast<std::size_t>(cfg.encoder.input_dim) != spec.dim())
    fail(ErrorCode::kConfig, "encoder.input_dim does not match the data dimension");
  if (cfg.mode == TrainMode::kCrossModal && cfg.encoder.vocab_size < spec.vocab_size)
    fail(ErrorCode::kConfig, "encoder.vocab_size is smaller than the data vocabulary");

  Rng init_rng = Rng(cfg.seed).split(0);
  TrainResult out;
  out.params = EncoderParams::init(cfg.encoder, init_rng);
  auto& params = out.params;
  Optimizer opt(cfg.optimizer, params.size(), params.decay_mask());
  std::vector<double> grad(params.size());

  BatchLossConfig lcfg;
  lcfg.objective = cfg.objective;
  lcfg.handling = cfg.handling;
  lcfg.num_negatives = cfg.num_negatives;
  lcfg.symmetrize = cfg.symmetrize;
  const InputPath anchor_path = cfg.mode == TrainMode::kCrossModal ? InputPath::kText : InputPath::kFeatures;

  const std::size_t total = cfg.total_steps();
  out.trace.reserve(total);
  ForwardCache ca, cp, cv;
  for (std::size_t step = 0; step < total; ++step) {
    Rng rng = batch_rng(cfg.seed, step);
    const Batch batch = draw_batch(spec, cfg, eta, rng);
    const auto pa = pointers(batch.anchors);
    const auto pp = pointers(batch.positives);
    const Eigen::MatrixXd ea = encode_batch(params, anchor_path, pa, &ca);
    const Eigen::MatrixXd ep = encode_batch(params, InputPath::kFeatures, pp, &cp);
    Eigen::MatrixXd ev;
    if (!batch.extra.empty()) ev = encode_batch(params, InputPath::kFeatures, pointers(batch.extra), &cv);

    BatchInputs in;
    in.anchors = &ea;
    in.positives = &ep;
    if (!batch.extra.empty()) {
      in.extra_positives = &ev;
      in.num_extra = cfg.num_positives;
    }
    in.eta = batch.eta;
    in.labels = batch.labels;
    in.gamma = params.gamma();

    BatchLossResult res;
    try {
      res = batch_loss(lcfg, in);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNumeric) throw;
      std::ostringstream msg;
      msg << "non-finite loss at step " << step << " (batch stream key " << rng.key() << "): " << e.what();
      fail(ErrorCode::kNumeric, msg.str());
    }
    if (!std::isfinite(res.loss)) {
      std::ostringstream msg;
      msg << "non-finite loss at step " << step << " (batch stream key " << rng.key() << ")";
      fail(ErrorCode::kNumeric, msg.str());
    }

    std::fill(grad.begin(), grad.end(), 0.0);
    backward(params, ca, res.d_anchors, grad);
    backward(params, cp, res.d_positives, grad);
    if (!batch.extra.empty()) backward(params, cv, res.d_extra, grad);
    if (cfg.encoder.train_gamma) grad[params.gamma_index()] += res.d_gamma;

    const double scale = cfg.cosine ? cosine_schedule(step, total, cfg.warmup_steps) : 1.0;
    opt.step(params.values(), grad, scale);
    if (cfg.encoder.train_gamma && params.values()[params.gamma_index()] < 1e-3)
      params.values()[params.gamma_index()] = 1e-3;

    double mean_eta = 0.0;
    for (double e : batch.eta) mean_eta += e;
    out.trace.push_back({step, res.loss, res.clamp_fraction, mean_eta / static_cast<double>(batch.eta.size())});
  }
  return out;
}

}  // namespace dcl
