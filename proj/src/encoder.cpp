#include "dcl/encoder.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "dcl/error.hpp"

namespace dcl {

namespace {

constexpr double kMinNorm = 1e-12;

void check_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) fail(ErrorCode::kNumeric, std::string("non-finite values in ") + what);
}

Eigen::MatrixXd run_tower(const EncoderParams& params, InputPath path, Eigen::MatrixXd input,
                          ForwardCache* cache) {
  const auto& cfg = params.config();
  Eigen::MatrixXd pre = params.w1(path) * input;
  pre.colwise() += params.b1(path);
  Eigen::MatrixXd hidden = cfg.activation == Activation::kTanh ? Eigen::MatrixXd(pre.array().tanh()) : pre;
  Eigen::MatrixXd raw = params.w2(path) * hidden;
  raw.colwise() += params.b2(path);
  check_finite(raw, "encoder forward pass");

  Eigen::VectorXd norms = raw.colwise().norm().transpose();
  Eigen::MatrixXd out;
  if (cfg.project) {
    for (Eigen::Index b = 0; b < norms.size(); ++b)
      if (norms[b] < kMinNorm)
        fail(ErrorCode::kNumeric, "degenerate embedding: pre-projection norm below 1e-12");
    out = raw * (params.gamma() * norms.cwiseInverse()).asDiagonal();
  } else {
    out = raw;
  }
  if (cache) {
    cache->path = path;
    cache->input = std::move(input);
    cache->hidden = std::move(hidden);
    cache->raw = std::move(raw);
    cache->norms = std::move(norms);
    cache->out = out;
  }
  return out;
}

}  // namespace

// --- config JSON ------------------------------------------------------------

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"input_dim", c.input_dim},   {"hidden", c.hidden},
       {"output_dim", c.output_dim}, {"vocab_size", c.vocab_size},
       {"text_embed_dim", c.text_embed_dim}, {"gamma", c.gamma},
       {"train_gamma", c.train_gamma}, {"activation", c.activation == Activation::kTanh ? "tanh" : "identity"},
       {"project", c.project}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  EncoderConfig d = c;  // fields absent from j keep their current values
  d.input_dim = j.value("input_dim", d.input_dim);
  d.hidden = j.value("hidden", d.hidden);
  d.output_dim = j.value("output_dim", d.output_dim);
  d.vocab_size = j.value("vocab_size", d.vocab_size);
  d.text_embed_dim = j.value("text_embed_dim", d.text_embed_dim);
  d.gamma = j.value("gamma", d.gamma);
  d.train_gamma = j.value("train_gamma", d.train_gamma);
  const std::string act =
      j.value("activation", std::string(d.activation == Activation::kTanh ? "tanh" : "identity"));
  if (act == "tanh") {
    d.activation = Activation::kTanh;
  } else if (act == "identity") {
    d.activation = Activation::kIdentity;
  } else {
    fail(ErrorCode::kConfig, "unknown activation '" + act + "'");
  }
  d.project = j.value("project", d.project);
  c = d;
}

// --- parameters -------------------------------------------------------------

EncoderParams::EncoderParams(const EncoderConfig& config) : config_(config) {
  if (config.input_dim <= 0 || config.hidden <= 0 || config.output_dim <= 0)
    fail(ErrorCode::kConfig, "encoder dimensions must be positive");
  if (!(config.gamma > 0.0)) fail(ErrorCode::kConfig, "encoder gamma must be positive");
  if (config.vocab_size > 0 && config.text_embed_dim <= 0)
    fail(ErrorCode::kConfig, "text_embed_dim must be positive when a vocabulary is given");
  const auto h = static_cast<std::size_t>(config.hidden);
  const auto o = static_cast<std::size_t>(config.output_dim);
  std::size_t off = 0;
  auto layout = [&](int in) {
    TowerOffsets t{};
    t.in = in;
    t.w1 = off;
    off += h * static_cast<std::size_t>(in);
    t.b1 = off;
    off += h;
    t.w2 = off;
    off += o * h;
    t.b2 = off;
    off += o;
    return t;
  };
  feat_ = layout(config.input_dim);
  if (config.vocab_size > 0) {
    token_off_ = off;
    off += static_cast<std::size_t>(config.text_embed_dim) * static_cast<std::size_t>(config.vocab_size);
    text_ = layout(config.text_embed_dim);
  }
  values_.assign(off + 1, 0.0);
  values_.back() = config.gamma;
}

EncoderParams EncoderParams::init(const EncoderConfig& config, Rng& rng) {
  EncoderParams p(config);
  auto xavier = [&](MatMap m) {
    const double a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = a * (2.0 * rng.uniform() - 1.0);
  };
  xavier(p.w1(InputPath::kFeatures));
  xavier(p.w2(InputPath::kFeatures));
  if (p.has_text()) {
    auto table = p.token_table();
    for (Eigen::Index j = 0; j < table.cols(); ++j)
      for (Eigen::Index i = 0; i < table.rows(); ++i) table(i, j) = rng.normal();
    xavier(p.w1(InputPath::kText));
    xavier(p.w2(InputPath::kText));
  }
  return p;
}

EncoderParams::TowerOffsets EncoderParams::tower(InputPath path) const {
  if (path == InputPath::kText) {
    if (!has_text()) fail(ErrorCode::kInvalidArgument, "encoder has no text tower (vocab_size is 0)");
    return text_;
  }
  return feat_;
}

std::vector<bool> EncoderParams::decay_mask() const {
  std::vector<bool> mask(values_.size(), false);
  const auto h = static_cast<std::size_t>(config_.hidden);
  const auto o = static_cast<std::size_t>(config_.output_dim);
  auto mark = [&](const TowerOffsets& t) {
    for (std::size_t i = 0; i < h * static_cast<std::size_t>(t.in); ++i) mask[t.w1 + i] = true;
    for (std::size_t i = 0; i < o * h; ++i) mask[t.w2 + i] = true;
  };
  mark(feat_);
  if (has_text()) {
    const std::size_t n = static_cast<std::size_t>(config_.text_embed_dim) * static_cast<std::size_t>(config_.vocab_size);
    for (std::size_t i = 0; i < n; ++i) mask[token_off_ + i] = true;
    mark(text_);
  }
  return mask;
}

EncoderParams::ConstMatMap EncoderParams::w1(InputPath p) const {
  const auto t = tower(p);
  return {values_.data() + t.w1, config_.hidden, t.in};
}
EncoderParams::ConstVecMap EncoderParams::b1(InputPath p) const {
  return {values_.data() + tower(p).b1, config_.hidden};
}
EncoderParams::ConstMatMap EncoderParams::w2(InputPath p) const {
  return {values_.data() + tower(p).w2, config_.output_dim, config_.hidden};
}
EncoderParams::ConstVecMap EncoderParams::b2(InputPath p) const {
  return {values_.data() + tower(p).b2, config_.output_dim};
}
EncoderParams::ConstMatMap EncoderParams::token_table() const {
  if (!has_text()) fail(ErrorCode::kInvalidArgument, "encoder has no token table");
  return {values_.data() + token_off_, config_.text_embed_dim, config_.vocab_size};
}
EncoderParams::MatMap EncoderParams::w1(InputPath p) {
  const auto t = tower(p);
  return {values_.data() + t.w1, config_.hidden, t.in};
}
EncoderParams::VecMap EncoderParams::b1(InputPath p) { return {values_.data() + tower(p).b1, config_.hidden}; }
EncoderParams::MatMap EncoderParams::w2(InputPath p) {
  return {values_.data() + tower(p).w2, config_.output_dim, config_.hidden};
}
EncoderParams::VecMap EncoderParams::b2(InputPath p) { return {values_.data() + tower(p).b2, config_.output_dim}; }
EncoderParams::MatMap EncoderParams::token_table() {
  if (!has_text()) fail(ErrorCode::kInvalidArgument, "encoder has no token table");
  return {values_.data() + token_off_, config_.text_embed_dim, config_.vocab_size};
}

// --- forward ----------------------------------------------------------------

Eigen::MatrixXd encode_features(const EncoderParams& params, const Eigen::MatrixXd& inputs, ForwardCache* cache) {
  if (inputs.rows() != params.config().input_dim)
    fail(ErrorCode::kInvalidArgument, "feature dimension does not match encoder input_dim");
  return run_tower(params, InputPath::kFeatures, inputs, cache);
}

Eigen::MatrixXd encode_tokens(const EncoderParams& params, std::span<const TokenSeq> seqs, ForwardCache* cache) {
  const auto table = params.token_table();
  Eigen::MatrixXd input = Eigen::MatrixXd::Zero(table.rows(), static_cast<Eigen::Index>(seqs.size()));
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    const auto& s = seqs[b];
    if (s.empty()) fail(ErrorCode::kInvalidArgument, "empty token sequence");
    for (int t : s) {
      if (t < 0 || t >= table.cols()) fail(ErrorCode::kInvalidArgument, "token id out of vocabulary");
      input.col(static_cast<Eigen::Index>(b)) += table.col(t);
    }
    input.col(static_cast<Eigen::Index>(b)) /= static_cast<double>(s.size());
  }
  if (cache) cache->tokens.assign(seqs.begin(), seqs.end());
  return run_tower(params, InputPath::kText, std::move(input), cache);
}

Eigen::MatrixXd encode_batch(const EncoderParams& params, InputPath path, std::span<const DataPoint* const> points,
                             ForwardCache* cache) {
  if (path == InputPath::kText) {
    std::vector<TokenSeq> seqs;
    seqs.reserve(points.size());
    for (const DataPoint* p : points) {
      if (!p->tokens) fail(ErrorCode::kInvalidArgument, "text path needs token sequences");
      seqs.push_back(*p->tokens);
    }
    return encode_tokens(params, seqs, cache);
  }
  const auto d = params.config().input_dim;
  Eigen::MatrixXd x(d, static_cast<Eigen::Index>(points.size()));
  for (std::size_t b = 0; b < points.size(); ++b) {
    const auto& f = points[b]->features;
    if (f.size() != static_cast<std::size_t>(d))
      fail(ErrorCode::kInvalidArgument, "feature dimension does not match encoder input_dim");
    x.col(static_cast<Eigen::Index>(b)) = Eigen::Map<const Eigen::VectorXd>(f.data(), d);
  }
  return encode_features(params, x, cache);
}

Embedding encode(const EncoderParams& params, const DataPoint& x) {
  const DataPoint* p = &x;
  const InputPath path = x.features.empty() ? InputPath::kText : InputPath::kFeatures;
  const Eigen::MatrixXd e = encode_batch(params, path, std::span<const DataPoint* const>(&p, 1));
  return {std::vector<double>(e.data(), e.data() + e.size())};
}

double similarity(const Embedding& a, const Embedding& b) {
  if (a.vec.size() != b.vec.size()) fail(ErrorCode::kInvalidArgument, "similarity: embedding dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.vec.size(); ++i) s += a.vec[i] * b.vec[i];
  return s;
}

// --- backward ---------------------------------------------------------------

void backward(const EncoderParams& params, const ForwardCache& cache, const Eigen::MatrixXd& d_out,
              std::span<double> grad) {
  require(grad.size() == params.size(), "backward: gradient buffer has wrong size");
  require(d_out.rows() == cache.out.rows() && d_out.cols() == cache.out.cols(), "backward: adjoint shape mismatch");
  const auto& cfg = params.config();
  const auto t = params.tower(cache.path);
  const double gamma = params.gamma();

  Eigen::MatrixXd d_raw;
  if (cfg.project) {
    d_raw.resize(d_out.rows(), d_out.cols());
    double d_gamma = 0.0;
    for (Eigen::Index b = 0; b < d_out.cols(); ++b) {
      const double n = cache.norms[b];
      const auto u = cache.raw.col(b);
      const auto g = d_out.col(b);
      const double ug = u.dot(g);
      d_gamma += ug / n;
      // gamma * (I/|u| - u u^T/|u|^3) g
      d_raw.col(b) = gamma * (g / n - u * (ug / (n * n * n)));
    }
    if (cfg.train_gamma) grad[params.gamma_index()] += d_gamma;
  } else {
    d_raw = d_out;
  }

  const auto h = static_cast<Eigen::Index>(cfg.hidden);
  const auto o = static_cast<Eigen::Index>(cfg.output_dim);
  Eigen::Map<Eigen::MatrixXd> gw2(grad.data() + t.w2, o, h);
  Eigen::Map<Eigen::VectorXd> gb2(grad.data() + t.b2, o);
  Eigen::Map<Eigen::MatrixXd> gw1(grad.data() + t.w1, h, t.in);
  Eigen::Map<Eigen::VectorXd> gb1(grad.data() + t.b1, h);

  gw2.noalias() += d_raw * cache.hidden.transpose();
  gb2 += d_raw.rowwise().sum();
  Eigen::MatrixXd d_hidden = params.w2(cache.path).transpose() * d_raw;
  if (cfg.activation == Activation::kTanh)
    d_hidden.array() *= (1.0 - cache.hidden.array().square());
  gw1.noalias() += d_hidden * cache.input.transpose();
  gb1 += d_hidden.rowwise().sum();

  if (cache.path == InputPath::kText) {
    const Eigen::MatrixXd d_input = params.w1(cache.path).transpose() * d_hidden;
    Eigen::Map<Eigen::MatrixXd> gtab(grad.data() + params.token_table_offset(), cfg.text_embed_dim, cfg.vocab_size);
    for (std::size_t b = 0; b < cache.tokens.size(); ++b) {
      const auto& s = cache.tokens[b];
      const double inv = 1.0 / static_cast<double>(s.size());
      for (int tok : s) gtab.col(tok) += inv * d_input.col(static_cast<Eigen::Index>(b));
    }
  }
  for (double g : grad)
    if (!std::isfinite(g)) fail(ErrorCode::kNumeric, "non-finite gradient in encoder backward pass");
}

// --- checkpoints ------------------------------------------------------------

void save_checkpoint(const EncoderParams& params, const CheckpointMeta& meta, const std::string& stem) {
  {
    std::ofstream bin(stem + ".bin", std::ios::binary);
    if (!bin) fail(ErrorCode::kIo, "cannot write checkpoint " + stem + ".bin");
    for (double v : params.values()) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      unsigned char bytes[8];
      for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
      bin.write(reinterpret_cast<const char*>(bytes), 8);
    }
  }
  nlohmann::json side = {{"format", "float64-le"},
                         {"count", params.size()},
                         {"encoder", params.config()},
                         {"seed", meta.seed},
                         {"step", meta.step},
                         {"config_hash", meta.config_hash}};
  std::ofstream js(stem + ".json");
  if (!js) fail(ErrorCode::kIo, "cannot write checkpoint sidecar " + stem + ".json");
  js << side.dump(2) << "\n";
}

EncoderParams load_checkpoint(const std::string& stem, CheckpointMeta* meta) {
  std::ifstream js(stem + ".json");
  if (!js) fail(ErrorCode::kMissingInput, "missing checkpoint sidecar " + stem + ".json");
  nlohmann::json side;
  try {
    js >> side;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, "malformed checkpoint sidecar: " + std::string(e.what()));
  }
  EncoderParams params(side.at("encoder").get<EncoderConfig>());
  if (side.at("count").get<std::size_t>() != params.size())
    fail(ErrorCode::kConfig, "checkpoint parameter count does not match encoder shape");
  std::ifstream bin(stem + ".bin", std::ios::binary);
  if (!bin) fail(ErrorCode::kMissingInput, "missing checkpoint " + stem + ".bin");
  auto vals = params.values();
  for (double& v : vals) {
    unsigned char bytes[8];
    if (!bin.read(reinterpret_cast<char*>(bytes), 8)) fail(ErrorCode::kIo, "truncated checkpoint " + stem + ".bin");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    v = std::bit_cast<double>(bits);
  }
  if (meta) {
    meta->seed = side.value("seed", std::uint64_t{0});
    meta->step = side.value("step", std::uint64_t{0});
    meta->config_hash = side.value("config_hash", std::string());
  }
  return params;
}

}  // namespace dcl
