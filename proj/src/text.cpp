#include "dcl/text.hpp"

#include <cmath>
#include <string>

#include "dcl/error.hpp"

namespace dcl {

std::pair<int, TokenSeq> generate_report_with_template(const MixtureSpec& spec, int c, Rng& rng) {
  if (c < 0 || static_cast<std::size_t>(c) >= spec.templates.size())
    fail(ErrorCode::kInvalidArgument, "invalid class id " + std::to_string(c));
  const auto& ts = spec.templates[static_cast<std::size_t>(c)];
  if (ts.empty()) fail(ErrorCode::kInvalidArgument, "class has no templates");
  std::vector<double> w;
  w.reserve(ts.size());
  for (const auto& t : ts) w.push_back(t.weight);
  const auto tid = static_cast<int>(ts.size() == 1 ? 0 : rng.categorical(w));
  TokenSeq seq = ts[static_cast<std::size_t>(tid)].tokens;
  if (spec.perturb_prob > 0.0 && spec.vocab_size > 1 && rng.uniform() < spec.perturb_prob) {
    const auto pos = rng.below(seq.size());
    // Uniform over the V-1 tokens that differ from the current one.
    auto repl = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.vocab_size - 1)));
    if (repl >= seq[pos]) ++repl;
    seq[pos] = repl;
  }
  return {tid, std::move(seq)};
}

TokenSeq generate_report(const MixtureSpec& spec, int c, Rng& rng) {
  return generate_report_with_template(spec, c, rng).second;
}

NGramLM::NGramLM(int vocab_size, double alpha) : vocab_(vocab_size), alpha_(alpha) {
  require(vocab_size > 0, "NGramLM: vocab_size must be positive");
  require(alpha > 0.0 && std::isfinite(alpha), "NGramLM: smoothing alpha must be positive");
  const auto v = static_cast<std::size_t>(vocab_size);
  unigram_.assign(v, 0.0);
  bigram_.assign(v * v, 0.0);
  context_.assign(v, 0.0);
}

void NGramLM::check_token(int t) const {
  if (t < 0 || t >= vocab_) fail(ErrorCode::kInvalidArgument, "token id " + std::to_string(t) + " out of vocabulary");
}

std::size_t NGramLM::index(int prev, int next) const {
  check_token(prev);
  check_token(next);
  return static_cast<std::size_t>(prev) * static_cast<std::size_t>(vocab_) + static_cast<std::size_t>(next);
}

void NGramLM::add(const TokenSeq& seq) {
  for (std::size_t i = 0; i < seq.size(); ++i) {
    check_token(seq[i]);
    unigram_[static_cast<std::size_t>(seq[i])] += 1.0;
    total_ += 1.0;
    if (i + 1 < seq.size()) {
      bigram_[index(seq[i], seq[i + 1])] += 1.0;
      context_[static_cast<std::size_t>(seq[i])] += 1.0;
    }
  }
}

double NGramLM::unigram(int t) const {
  check_token(t);
  return (unigram_[static_cast<std::size_t>(t)] + alpha_) / (total_ + alpha_ * vocab_);
}

double NGramLM::bigram(int prev, int next) const {
  const std::size_t i = index(prev, next);
  return (bigram_[i] + alpha_) / (context_[static_cast<std::size_t>(prev)] + alpha_ * vocab_);
}

std::vector<double> NGramLM::masked_conditional(const TokenSeq& x, std::size_t pos) const {
  require(pos < x.size(), "masked_conditional: position out of range");
  const auto v = static_cast<std::size_t>(vocab_);
  std::vector<double> p(v);
  const bool has_left = pos > 0;
  const bool has_right = pos + 1 < x.size();
  double z = 0.0;
  for (std::size_t t = 0; t < v; ++t) {
    const int tok = static_cast<int>(t);
    double w = has_left ? bigram(x[pos - 1], tok) : unigram(tok);
    if (has_right) w *= bigram(tok, x[pos + 1]);
    p[t] = w;
    z += w;
  }
  for (double& w : p) w /= z;
  return p;
}

double NGramLM::pseudo_log_likelihood(const TokenSeq& x) const {
  require(!x.empty(), "pseudo_log_likelihood: empty sequence");
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    check_token(x[i]);
    total += std::log(masked_conditional(x, i)[static_cast<std::size_t>(x[i])]);
  }
  return total;
}

NGramLM fit_ngram(std::span<const TokenSeq> corpus, double alpha, int vocab_size) {
  if (corpus.empty()) fail(ErrorCode::kInvalidArgument, "fit_ngram: empty corpus");
  NGramLM lm(vocab_size, alpha);
  for (const auto& s : corpus) lm.add(s);
  return lm;
}

double pseudo_log_likelihood(const NGramLM& lm, const TokenSeq& x) { return lm.pseudo_log_likelihood(x); }

void to_json(nlohmann::json& j, const NGramLM& lm) {
  j = {{"vocab_size", lm.vocab_},
       {"alpha", lm.alpha_},
       {"unigram_counts", lm.unigram_},
       {"bigram_counts", lm.bigram_}};
}

void from_json(const nlohmann::json& j, NGramLM& lm) {
  try {
    NGramLM out(j.at("vocab_size").get<int>(), j.at("alpha").get<double>());
    out.unigram_ = j.at("unigram_counts").get<std::vector<double>>();
    out.bigram_ = j.at("bigram_counts").get<std::vector<double>>();
    const auto v = static_cast<std::size_t>(out.vocab_);
    if (out.unigram_.size() != v || out.bigram_.size() != v * v)
      fail(ErrorCode::kConfig, "language model count tables have the wrong shape");
    out.total_ = 0.0;
    for (std::size_t a = 0; a < v; ++a) {
      out.total_ += out.unigram_[a];
      double ctx = 0.0;
      for (std::size_t b = 0; b < v; ++b) ctx += out.bigram_[a * v + b];
      out.context_[a] = ctx;
    }
    lm = std::move(out);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("malformed language model: ") + e.what());
  }
}

}  // namespace dcl
