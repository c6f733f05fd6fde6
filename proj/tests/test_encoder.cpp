#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "dcl/encoder.hpp"
#include "dcl/error.hpp"
#include "oracles.hpp"

using namespace dcl;

namespace {

EncoderConfig small(double gamma = 1.0, int vocab = 0) {
  EncoderConfig c;
  c.input_dim = 3;
  c.hidden = 5;
  c.output_dim = 4;
  c.gamma = gamma;
  c.vocab_size = vocab;
  c.text_embed_dim = 2;
  return c;
}

Eigen::MatrixXd random_matrix(Rng& rng, int r, int c) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

DataPoint feat(std::vector<double> f) {
  DataPoint x;
  x.features = std::move(f);
  return x;
}

}  // namespace

TEST_CASE("embeddings lie on the gamma sphere") {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    const double gamma = 0.1 + 5 * rng.uniform();
    const auto p = EncoderParams::init(small(gamma, 6), rng);
    const Eigen::MatrixXd e = encode_features(p, 3 * random_matrix(rng, 3, 10));
    for (Eigen::Index j = 0; j < e.cols(); ++j) CHECK(std::abs(e.col(j).norm() - gamma) <= 1e-9);
    const std::vector<TokenSeq> seqs{{0, 5, 2}, {1}};
    const Eigen::MatrixXd et = encode_tokens(p, seqs);
    for (Eigen::Index j = 0; j < et.cols(); ++j) CHECK(std::abs(et.col(j).norm() - gamma) <= 1e-9);
  }
  Rng r2(2);
  const auto p = EncoderParams::init(small(std::sqrt(2.0)), r2);
  const auto e = encode(p, feat({0.3, -1.0, 2.0}));
  CHECK(std::sqrt(similarity(e, e)) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("zero weights with a last-layer bias ignore the input") {
  EncoderParams p(small(2.0));
  auto b2 = p.b2(InputPath::kFeatures);
  b2 << 1.0, -2.0, 0.0, 2.0;
  const Eigen::Vector4d want = 2.0 * Eigen::Vector4d(1, -2, 0, 2) / 3.0;
  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    const Eigen::MatrixXd e = encode_features(p, random_matrix(rng, 3, 1));
    CHECK((e.col(0) - want).norm() <= 1e-15);
  }
}

TEST_CASE("degenerate pre-projection norm raises") {
  EncoderParams p(small());
  CHECK_THROWS_AS(encode(p, feat({1, 2, 3})), Error);
}

TEST_CASE("similarity") {
  const Embedding a{{1, 0}}, b{{0, 1}}, na{{-1, 0}};
  CHECK(similarity(a, a) == 1.0);
  CHECK(similarity(a, na) == -1.0);
  CHECK(similarity(a, b) == 0.0);
  CHECK_THROWS_AS(similarity(a, Embedding{{1, 0, 0}}), Error);
  Rng rng(4);
  for (int t = 0; t < 1000; ++t) {
    const double gamma = 0.2 + 3 * rng.uniform();
    const auto p = EncoderParams::init(small(gamma), rng);
    const auto e1 = encode(p, feat({rng.normal(), rng.normal(), rng.normal()}));
    const auto e2 = encode(p, feat({rng.normal(), rng.normal(), rng.normal()}));
    CHECK(std::abs(similarity(e1, e2)) <= gamma * gamma + 1e-9);
  }
}

TEST_CASE("backward") {
  Rng rng(5);
  SUBCASE("loss = |f(x)|^2 has no gradient in the MLP weights") {
    const auto p = EncoderParams::init(small(1.7), rng);
    ForwardCache cache;
    const Eigen::MatrixXd e = encode_features(p, random_matrix(rng, 3, 4), &cache);
    std::vector<double> g(p.size(), 0.0);
    backward(p, cache, 2.0 * e, g);
    for (std::size_t i = 0; i < p.gamma_index(); ++i) CHECK(std::abs(g[i]) <= 1e-12);
  }
  SUBCASE("linear network without projection: outer-product closed form") {
    EncoderConfig c = small();
    c.activation = Activation::kIdentity;
    c.project = false;
    const auto p = EncoderParams::init(c, rng);
    const Eigen::MatrixXd x = random_matrix(rng, 3, 1);
    const Eigen::MatrixXd d = random_matrix(rng, 4, 1);  // loss = d^T f(x)
    ForwardCache cache;
    encode_features(p, x, &cache);
    std::vector<double> g(p.size(), 0.0);
    backward(p, cache, d, g);
    const Eigen::MatrixXd h = p.w1(InputPath::kFeatures) * x + p.b1(InputPath::kFeatures);
    const Eigen::MatrixXd dw2 = d * h.transpose();
    const Eigen::MatrixXd dw1 = p.w2(InputPath::kFeatures).transpose() * d * x.transpose();
    const auto off = p.tower(InputPath::kFeatures);
    CHECK((Eigen::Map<const Eigen::MatrixXd>(g.data() + off.w2, 4, 5) - dw2).norm() <= 1e-12);
    CHECK((Eigen::Map<const Eigen::MatrixXd>(g.data() + off.w1, 5, 3) - dw1).norm() <= 1e-12);
    CHECK((Eigen::Map<const Eigen::VectorXd>(g.data() + off.b2, 4) - d).norm() <= 1e-12);
  }
  SUBCASE("finite differences on random parameters, both towers and gamma") {
    for (int t = 0; t < 100; ++t) {
      EncoderConfig c = small(0.5 + 2 * rng.uniform(), 5);
      c.train_gamma = true;
      const auto p = EncoderParams::init(c, rng);
      const Eigen::MatrixXd x = random_matrix(rng, 3, 3);
      const std::vector<TokenSeq> seqs{{0, 4}, {3, 3, 1}};
      const Eigen::MatrixXd dx = random_matrix(rng, 4, 3), dt = random_matrix(rng, 4, 2);
      auto loss = [&](const EncoderParams& q) {
        return (dx.cwiseProduct(encode_features(q, x))).sum() + (dt.cwiseProduct(encode_tokens(q, seqs))).sum();
      };
      ForwardCache cf, ct;
      encode_features(p, x, &cf);
      encode_tokens(p, seqs, &ct);
      std::vector<double> g(p.size(), 0.0);
      backward(p, cf, dx, g);
      backward(p, ct, dt, g);
      double worst = 0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        EncoderParams q = p;
        const double x0 = q.values()[i], h = 1e-5;
        q.values()[i] = x0 + h;
        const double up = loss(q);
        q.values()[i] = x0 - h;
        const double dn = loss(q);
        worst = std::max(worst, oracle::rel_err((up - dn) / (2 * h), g[i]));
      }
      CHECK(worst < 1e-4);
    }
  }
}

TEST_CASE("checkpoint round trip") {
  Rng rng(6);
  const auto p = EncoderParams::init(small(1.3, 4), rng);
  const auto dir = std::filesystem::temp_directory_path() / "dcl_test_encoder";
  std::filesystem::create_directories(dir);
  const std::string stem = (dir / "ckpt").string();
  save_checkpoint(p, {9, 42, "abc"}, stem);
  CheckpointMeta meta;
  const auto q = load_checkpoint(stem, &meta);
  CHECK(meta.seed == 9);
  CHECK(meta.step == 42);
  CHECK(std::equal(p.values().begin(), p.values().end(), q.values().begin(), q.values().end()));
  CHECK(q.config().vocab_size == 4);
  CHECK(std::filesystem::file_size(stem + ".bin") == 8 * p.size());
  CHECK_THROWS_AS(load_checkpoint((dir / "missing").string()), Error);
  std::filesystem::remove_all(dir);
}
