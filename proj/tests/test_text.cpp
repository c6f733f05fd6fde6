#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dcl/error.hpp"
#include "dcl/text.hpp"

using namespace dcl;

namespace {

MixtureSpec one_class(std::vector<ReportTemplate> ts, int vocab, double perturb = 0.0) {
  MixtureSpec s;
  s.class_dist = ClassDistribution({1.0});
  s.gaussians = {{{0.0}, 1.0}};
  s.templates = {std::move(ts)};
  s.vocab_size = vocab;
  s.perturb_prob = perturb;
  return s;
}

}  // namespace

TEST_CASE("generate_report") {
  Rng rng(1);
  SUBCASE("single template, no perturbation") {
    const auto s = one_class({{{3, 1, 4}, 1.0, {}}}, 5);
    for (int i = 0; i < 1000; ++i) CHECK(generate_report(s, 0, rng) == TokenSeq{3, 1, 4});
  }
  SUBCASE("two equal-weight templates") {
    const auto s = one_class({{{0}, 1.0, {}}, {{1}, 1.0, {}}}, 2);
    const int n = 100000;
    int first = 0;
    for (int i = 0; i < n; ++i) first += generate_report(s, 0, rng)[0] == 0;
    CHECK(std::abs(first / double(n) - 0.5) <= 0.005);
  }
  SUBCASE("perturbation probability 0.1 on length 5") {
    const TokenSeq tpl{0, 1, 2, 3, 4};
    const auto s = one_class({{tpl, 1.0, {}}}, 8, 0.1);
    const int n = 100000;
    double ham = 0;
    for (int i = 0; i < n; ++i) {
      const auto x = generate_report(s, 0, rng);
      for (std::size_t j = 0; j < 5; ++j) ham += x[j] != tpl[j];
    }
    CHECK(std::abs(ham / n - 0.1) <= 0.01);
  }
  SUBCASE("invalid class") {
    const auto s = one_class({{{0}, 1.0, {}}}, 2);
    CHECK_THROWS_AS(generate_report(s, 1, rng), Error);
  }
}

TEST_CASE("fit_ngram") {
  SUBCASE("alpha -> 0 makes p(1|0) -> 1") {
    const std::vector<TokenSeq> corpus{{0, 1}, {0, 1}};
    CHECK(fit_ngram(corpus, 1e-12, 2).bigram(0, 1) == doctest::Approx(1.0).epsilon(1e-10));
  }
  SUBCASE("unseen context is uniform under alpha = 1") {
    const std::vector<TokenSeq> corpus{{0, 0}};
    const auto lm = fit_ngram(corpus, 1.0, 2);
    CHECK(lm.bigram(1, 0) == 0.5);
    CHECK(lm.bigram(1, 1) == 0.5);
  }
  SUBCASE("hand count on [[0,1],[0,0]]") {
    // token 0 is a left context twice: 0->1 once, 0->0 once
    const std::vector<TokenSeq> corpus{{0, 1}, {0, 0}};
    const auto lm = fit_ngram(corpus, 1.0, 2);
    CHECK(lm.bigram(0, 1) == doctest::Approx((1.0 + 1.0) / (2.0 + 2.0)));
    CHECK(lm.bigram(0, 0) + lm.bigram(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("empty corpus") { CHECK_THROWS_AS(fit_ngram(std::vector<TokenSeq>{}, 1.0, 2), Error); }
  SUBCASE("conditionals sum to one") {
    Rng rng(2);
    std::vector<TokenSeq> corpus;
    for (int i = 0; i < 50; ++i) {
      TokenSeq s(1 + rng.below(8));
      for (auto& t : s) t = static_cast<int>(rng.below(7));
      corpus.push_back(s);
    }
    const auto lm = fit_ngram(corpus, 0.3, 7);
    for (int a = 0; a < 7; ++a) {
      double z = 0;
      for (int b = 0; b < 7; ++b) z += lm.bigram(a, b);
      CHECK(std::abs(z - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("pseudo_log_likelihood") {
  SUBCASE("uniform LM") {
    const NGramLM lm(5, 1.0);
    for (std::size_t len : {1u, 2u, 7u}) {
      const TokenSeq x(len, 3);
      CHECK(pseudo_log_likelihood(lm, x) == doctest::Approx(len * std::log(1.0 / 5)).epsilon(1e-14));
    }
  }
  SUBCASE("length one is the smoothed unigram") {
    const std::vector<TokenSeq> corpus{{0, 1, 1}, {2}};
    const auto lm = fit_ngram(corpus, 0.5, 3);
    CHECK(pseudo_log_likelihood(lm, {1}) == doctest::Approx(std::log((2 + 0.5) / (4 + 1.5))).epsilon(1e-14));
  }
  SUBCASE("deterministic chain") {
    std::vector<TokenSeq> corpus(20);
    for (auto& s : corpus)
      for (int i = 0; i < 12; ++i) s.push_back(i % 3);
    const auto lm = fit_ngram(corpus, 1e-10, 3);
    CHECK(std::abs(pseudo_log_likelihood(lm, {0, 1, 2})) < 1e-8);
  }
  SUBCASE("masked conditionals are normalised and scoring is repeatable") {
    Rng rng(3);
    std::vector<TokenSeq> corpus;
    for (int i = 0; i < 40; ++i) {
      TokenSeq s(2 + rng.below(6));
      for (auto& t : s) t = static_cast<int>(rng.below(6));
      corpus.push_back(s);
    }
    const auto lm = fit_ngram(corpus, 0.7, 6);
    for (const auto& x : corpus) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        double z = 0;
        for (double p : lm.masked_conditional(x, i)) z += p;
        CHECK(std::abs(z - 1.0) <= 1e-12);
      }
      CHECK(pseudo_log_likelihood(lm, x) == pseudo_log_likelihood(lm, x));
    }
  }
  SUBCASE("frequent templates outscore rare ones") {
    Rng rng(4);
    for (int t = 0; t < 100; ++t) {
      // Same token pattern on disjoint token sets, >= 10x frequency ratio,
      // so frequency is the only difference between the two.
      const int half = 3 + static_cast<int>(rng.below(4));
      const int v = 2 * half;
      TokenSeq a, b;
      const std::size_t len = 1 + rng.below(5);
      for (std::size_t i = 0; i < len; ++i) {
        a.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(half))));
        b.push_back(a.back() + half);
      }
      const double ratio = 10 + 40 * rng.uniform();
      auto s = one_class({{a, ratio, {}}, {b, 1.0, {}}}, v);
      std::vector<TokenSeq> corpus;
      for (int i = 0; i < 2000; ++i) corpus.push_back(generate_report(s, 0, rng));
      const auto lm = fit_ngram(corpus, 1.0, v);
      CHECK(pseudo_log_likelihood(lm, a) >= pseudo_log_likelihood(lm, b));
    }
  }
}

TEST_CASE("json round trip") {
  const std::vector<TokenSeq> corpus{{0, 1, 2}, {2, 2}};
  const auto lm = fit_ngram(corpus, 0.25, 3);
  nlohmann::json j = lm;
  const NGramLM back = j.get<NGramLM>();
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) CHECK(back.bigram(a, b) == lm.bigram(a, b));
  CHECK(back.pseudo_log_likelihood({0, 1, 2}) == lm.pseudo_log_likelihood({0, 1, 2}));
}
