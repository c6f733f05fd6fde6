#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "dcl/error.hpp"
#include "dcl/eval.hpp"
#include "dcl/rng.hpp"

using namespace dcl;

namespace {

Eigen::MatrixXd one_hot(const std::vector<int>& y, int k) {
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(k, static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) e(y[i], static_cast<Eigen::Index>(i)) = 1.0;
  return e;
}

std::vector<int> cyclic_labels(int n, int k) {
  std::vector<int> y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = i % k;
  return y;
}

Eigen::MatrixXd gaussian(Rng& rng, int d, int n) {
  Eigen::MatrixXd m(d, n);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

std::vector<std::size_t> identity_pairing(std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  return p;
}

}  // namespace

TEST_CASE("linear probe") {
  SUBCASE("one-hot embeddings are perfectly separable") {
    const auto ytr = cyclic_labels(200, 4), yte = cyclic_labels(100, 4);
    for (double lf : {0.1, 1.0}) {
      const auto r = linear_probe(one_hot(ytr, 4), ytr, one_hot(yte, 4), yte, 4, lf, 1);
      CHECK(r.accuracy == 1.0);
    }
  }
  SUBCASE("random labels give chance accuracy") {
    Rng rng(1);
    const int k = 4;
    std::vector<int> ytr(2000), yte(2000);
    for (auto& y : ytr) y = static_cast<int>(rng.below(k));
    for (auto& y : yte) y = static_cast<int>(rng.below(k));
    const auto r = linear_probe(gaussian(rng, 8, 2000), ytr, gaussian(rng, 8, 2000), yte, k, 1.0, 2);
    CHECK(std::abs(r.accuracy - 1.0 / k) <= 0.05);
  }
  SUBCASE("a subset that cannot cover every class is an error") {
    const auto y = cyclic_labels(100, 4);
    CHECK_THROWS_AS(linear_probe(one_hot(y, 4), y, one_hot(y, 4), y, 4, 0.01, 3), Error);
  }
  SUBCASE("more labels help on average") {
    Rng rng(2);
    const int k = 5, n = 3000;
    Eigen::MatrixXd means = 1.2 * gaussian(rng, 6, k);
    auto draw = [&](int count, std::vector<int>& y) {
      y = cyclic_labels(count, k);
      Eigen::MatrixXd x = gaussian(rng, 6, count);
      for (int i = 0; i < count; ++i) x.col(i) += means.col(y[static_cast<std::size_t>(i)]);
      return x;
    };
    std::vector<int> ytr, yte;
    const auto xtr = draw(n, ytr), xte = draw(n, yte);
    double low = 0, high = 0;
    for (std::uint64_t s = 0; s < 5; ++s) {
      low += linear_probe(xtr, ytr, xte, yte, k, 0.01, s).accuracy / 5;
      high += linear_probe(xtr, ytr, xte, yte, k, 1.0, s).accuracy / 5;
    }
    CHECK(high >= low);
  }
}

TEST_CASE("mean classifier") {
  const auto y = cyclic_labels(60, 3);
  CHECK(mean_classifier_accuracy(one_hot(y, 3), y, one_hot(y, 3), y, 3) == 1.0);
}

TEST_CASE("retrieval metrics") {
  const std::vector<int> ks{1, 2, 5};
  SUBCASE("orthogonal identical sets retrieve perfectly") {
    const Eigen::MatrixXd e = Eigen::MatrixXd::Identity(5, 5);
    const auto r = retrieval_metrics(e, e, identity_pairing(5), ks);
    CHECK(r.recall_q2g[0] == 1.0);
    CHECK(r.medr_q2g == 1.0);
    CHECK(r.medr_g2q == 1.0);
  }
  SUBCASE("all-equal embeddings rank by index") {
    const std::size_t g = 7;
    const Eigen::MatrixXd e = Eigen::MatrixXd::Ones(3, g);
    const auto r = retrieval_metrics(e, e, identity_pairing(g), ks);
    // query i's partner is at rank i + 1; lower median of 1..7 is 4
    for (std::size_t i = 0; i < g; ++i) CHECK(r.ranks_q2g[i] == i + 1);
    CHECK(r.medr_q2g == 4.0);
    const auto r8 = retrieval_metrics(Eigen::MatrixXd::Ones(3, 8), Eigen::MatrixXd::Ones(3, 8), identity_pairing(8), ks);
    CHECK(r8.medr_q2g == 4.0);
  }
  SUBCASE("average recall is the mean of the six numbers") {
    Rng rng(3);
    const auto q = gaussian(rng, 4, 120), g = gaussian(rng, 4, 120);
    const std::vector<int> big{10, 50, 100};
    const auto r = retrieval_metrics(q, g, identity_pairing(120), big);
    double s = 0;
    for (int i = 0; i < 3; ++i) s += r.recall_q2g[i] + r.recall_g2q[i];
    CHECK(r.avg_recall == doctest::Approx(s / 6).epsilon(1e-15));
  }
  SUBCASE("invariants: scale invariance, monotone recall, R@G = 1") {
    Rng rng(4);
    for (int t = 0; t < 50; ++t) {
      const std::size_t n = 5 + rng.below(40);
      const auto q = gaussian(rng, 3, static_cast<int>(n)), g = gaussian(rng, 3, static_cast<int>(n));
      std::vector<std::size_t> pairing = identity_pairing(n);
      for (std::size_t i = n - 1; i > 0; --i) std::swap(pairing[i], pairing[rng.below(i + 1)]);
      std::vector<int> all_k;
      for (std::size_t k = 1; k <= n; ++k) all_k.push_back(static_cast<int>(k));
      const auto a = retrieval_metrics(q, g, pairing, all_k);
      const double c = 0.1 + 5 * rng.uniform();
      const auto b = retrieval_metrics(c * q, c * g, pairing, all_k);
      CHECK(a.ranks_q2g == b.ranks_q2g);
      CHECK(a.ranks_g2q == b.ranks_g2q);
      for (std::size_t k = 1; k < n; ++k) {
        CHECK(a.recall_q2g[k] >= a.recall_q2g[k - 1]);
        CHECK(a.recall_g2q[k] >= a.recall_g2q[k - 1]);
      }
      CHECK(a.recall_q2g.back() == 1.0);
      CHECK(a.recall_g2q.back() == 1.0);
    }
  }
  SUBCASE("pairing must be a bijection") {
    const Eigen::MatrixXd e = Eigen::MatrixXd::Identity(3, 3);
    const std::vector<std::size_t> bad{0, 0, 1};
    CHECK_THROWS_AS(retrieval_metrics(e, e, bad, ks), Error);
  }
}

TEST_CASE("prompt classification") {
  Rng rng(5);
  Eigen::MatrixXd img(2, 100);
  bool pos_raw[100];
  for (int i = 0; i < 100; ++i) {
    pos_raw[static_cast<std::size_t>(i)] = i % 3 == 0;
    img.col(i) = (pos_raw[static_cast<std::size_t>(i)] ? 1.0 : -1.0) * Eigen::Vector2d(1, 0.5) +
                 0.1 * Eigen::Vector2d(rng.normal(), rng.normal());
  }
  const std::span<const bool> pos(pos_raw, 100);
  SUBCASE("prompts at the class prototypes") {
    const auto r = prompt_classify(img, pos, Eigen::Vector2d(1, 0.5), Eigen::Vector2d(-1, -0.5));
    CHECK(r.accuracy == 1.0);
  }
  SUBCASE("identical prompts tie to negative") {
    const auto r = prompt_classify(img, pos, Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 0));
    CHECK(r.accuracy == doctest::Approx(66.0 / 100));
  }
  SUBCASE("missing prompt") {
    CHECK_THROWS_AS(prompt_classify(img, pos, Eigen::VectorXd(), Eigen::Vector2d(1, 0)), Error);
  }
}

TEST_CASE("project_2d") {
  Rng rng(6);
  SUBCASE("points on a line") {
    Eigen::MatrixXd e(4, 50);
    const Eigen::Vector4d dir(1, 2, -1, 0.5);
    for (int i = 0; i < 50; ++i) e.col(i) = rng.normal() * dir + Eigen::Vector4d(1, 1, 1, 1);
    const auto p = project_2d(e);
    CHECK(p.explained[1] < 1e-10 * p.explained[0]);
  }
  SUBCASE("isotropic cloud") {
    const int d = 10, n = 200000;
    const auto p = project_2d(gaussian(rng, d, n));
    CHECK(std::abs(p.explained[0] + p.explained[1] - 2.0 / d) < 0.01);
  }
  SUBCASE("sign convention") {
    const auto e = gaussian(rng, 5, 100);
    const auto a = project_2d(e), b = project_2d(-e);
    CHECK((a.coords + b.coords).norm() < 1e-9);
  }
  SUBCASE("fewer than two samples") { CHECK_THROWS_AS(project_2d(Eigen::MatrixXd::Ones(3, 1)), Error); }
}
