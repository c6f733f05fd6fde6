#pragma once

#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dcl/mixture.hpp"
#include "dcl/rng.hpp"

namespace dcl {

/// Draws a class template by weight and, with probability spec.perturb_prob,
/// replaces one uniformly chosen position with a different uniform token.
TokenSeq generate_report(const MixtureSpec& spec, int c, Rng& rng);
/// As generate_report, also returning the chosen template index.
std::pair<int, TokenSeq> generate_report_with_template(const MixtureSpec& spec, int c, Rng& rng);

/// Bigram language model with add-alpha smoothing.
///
/// p(b | a) = (n(a,b) + alpha) / (n(a,.) + alpha V), where n(a,.) counts the
/// times `a` occurs as a left context. The unigram p(t) uses all token
/// occurrences.
class NGramLM {
 public:
  NGramLM() = default;
  NGramLM(int vocab_size, double alpha);

  int vocab_size() const noexcept { return vocab_; }
  double alpha() const noexcept { return alpha_; }

  double unigram(int t) const;
  double bigram(int prev, int next) const;
  double bigram_count(int prev, int next) const { return bigram_[index(prev, next)]; }
  double unigram_count(int t) const { return unigram_.at(static_cast<std::size_t>(t)); }

  /// Distribution of the token at `pos` given its neighbours: proportional
  /// to p(t | left) p(right | t); a missing left neighbour is replaced by the
  /// unigram prior, a missing right one by a constant factor.
  std::vector<double> masked_conditional(const TokenSeq& x, std::size_t pos) const;

  /// Sum over positions of log masked_conditional(x, i)[x_i].
  double pseudo_log_likelihood(const TokenSeq& x) const;

  void add(const TokenSeq& seq);

  friend void to_json(nlohmann::json& j, const NGramLM& lm);
  friend void from_json(const nlohmann::json& j, NGramLM& lm);

 private:
  std::size_t index(int prev, int next) const;
  void check_token(int t) const;

  int vocab_ = 0;
  double alpha_ = 1.0;
  std::vector<double> unigram_;
  std::vector<double> bigram_;   // row-major V x V
  std::vector<double> context_;  // left-context totals per token
  double total_ = 0.0;
};

NGramLM fit_ngram(std::span<const TokenSeq> corpus, double alpha, int vocab_size);

double pseudo_log_likelihood(const NGramLM& lm, const TokenSeq& x);

}  // namespace dcl
