#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "dcl/error.hpp"
#include "dcl/experiments.hpp"
#include "dcl/scenarios.hpp"
#include "dcl/train.hpp"

using namespace dcl;

namespace {

TrainConfig tiny(const MixtureSpec& spec) {
  TrainConfig c;
  c.batch_size = 16;
  c.epochs = 2;
  c.samples_per_epoch = 128;
  c.encoder.input_dim = static_cast<int>(spec.dim());
  c.encoder.hidden = 16;
  c.encoder.output_dim = 8;
  c.seed = 5;
  return c;
}

MixtureSpec analog() {
  GaussianAnalogConfig g;
  g.mean_scale = 3.0;
  return gaussian_analog_spec(g);
}

}  // namespace

TEST_CASE("lr = 0 keeps the initial parameters bitwise") {
  const auto spec = analog();
  auto c = tiny(spec);
  c.optimizer.lr = 0.0;
  c.optimizer.weight_decay = 0.0;
  const auto r = train(spec, c, EtaProvider::constant(0.1));
  Rng init = Rng(c.seed).split(0);
  const auto p0 = EncoderParams::init(c.encoder, init);
  CHECK(std::equal(r.params.values().begin(), r.params.values().end(), p0.values().begin(), p0.values().end()));
}

TEST_CASE("same seed, same trace; different seed, different trace") {
  const auto spec = analog();
  auto c = tiny(spec);
  const auto a = train(spec, c, EtaProvider::constant(0.1));
  const auto b = train(spec, c, EtaProvider::constant(0.1));
  REQUIRE(a.trace.size() == c.total_steps());
  for (std::size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i].loss == b.trace[i].loss);
  c.seed = 6;
  const auto d = train(spec, c, EtaProvider::constant(0.1));
  CHECK(d.trace[0].loss != a.trace[0].loss);
}

TEST_CASE("defaults carry the reference hyperparameters") {
  TrainConfig c;
  CHECK(c.optimizer.lr == 1e-3);
  CHECK(c.optimizer.weight_decay == 1e-6);
  CHECK(c.optimizer.beta1 == 0.9);
  CHECK(c.optimizer.beta2 == 0.999);
  CHECK(c.optimizer.eps == 1e-8);
}

TEST_CASE("training lowers the loss and the traces stay finite") {
  const auto spec = analog();
  auto spec_ptr = std::make_shared<const MixtureSpec>(spec);
  auto c = tiny(spec);
  c.epochs = 10;
  c.samples_per_epoch = 512;
  c.optimizer.lr = 3e-3;
  for (const auto& eta : {EtaProvider::constant(0.1), EtaProvider::true_oracle(spec_ptr)}) {
    for (auto kind : {HandlingKind::kNone, HandlingKind::kRemoveByLabel, HandlingKind::kReweightBySim}) {
      c.handling.kind = kind;
      const auto r = train(spec, c, eta);
      double first = 0, last = 0;
      for (std::size_t i = 0; i < 10; ++i) first += r.trace[i].loss;
      for (std::size_t i = r.trace.size() - 10; i < r.trace.size(); ++i) last += r.trace[i].loss;
      for (const auto& row : r.trace) REQUIRE(std::isfinite(row.loss));
      CHECK(last < first);
    }
  }
}

TEST_CASE("cross-modal training with the LM eta") {
  CrossModalConfig cm;
  cm.dim = 8;
  const auto spec = cross_modal_spec(cm);
  LmEtaConfig lc;
  lc.corpus_size = 2000;
  const auto eta = EtaProvider::lm_log_linear(0.2, 0.35, std::make_shared<const NGramLM>(fit_report_lm(spec, lc)));
  auto c = tiny(spec);
  c.mode = TrainMode::kCrossModal;
  c.encoder.vocab_size = spec.vocab_size;
  c.encoder.train_gamma = true;
  c.encoder.gamma = 3.0;
  const auto r = train(spec, c, eta);
  for (const auto& row : r.trace) {
    CHECK(std::isfinite(row.loss));
    CHECK(row.mean_eta > 0.0);
  }
  CHECK(r.params.gamma() != 3.0);
}

TEST_CASE("config validation and json") {
  const auto spec = analog();
  auto c = tiny(spec);
  c.batch_size = 1;
  CHECK_THROWS_AS(train(spec, c, EtaProvider::constant(0.1)), Error);
  c = tiny(spec);
  c.num_negatives = c.batch_size;
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny(spec);
  c.encoder.input_dim = 3;
  CHECK_THROWS_AS(train(spec, c, EtaProvider::constant(0.1)), Error);

  nlohmann::json j = tiny(spec);
  TrainConfig back;
  from_json(j, back);
  CHECK(nlohmann::json(back) == j);
  TrainConfig partial;
  from_json(nlohmann::json{{"epochs", 3}, {"encoder", {{"hidden", 7}}}}, partial);
  CHECK(partial.epochs == 3);
  CHECK(partial.encoder.hidden == 7);
  CHECK(partial.encoder.output_dim == EncoderConfig{}.output_dim);
  CHECK(partial.batch_size == TrainConfig{}.batch_size);
}
