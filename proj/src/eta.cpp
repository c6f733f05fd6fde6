#include "dcl/eta.hpp"

#include <algorithm>
#include <cmath>

#include "dcl/error.hpp"

namespace dcl {

namespace {
template <class... Ts>
struct Overload : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overload(Ts...) -> Overload<Ts...>;
}  // namespace

EtaProvider::EtaProvider(Variant v, double eta_min, double eta_max) : v_(std::move(v)), lo_(eta_min), hi_(eta_max) {
  if (!(0.0 < lo_ && lo_ <= hi_ && hi_ < 1.0))
    fail(ErrorCode::kConfig, "eta clamp range must satisfy 0 < eta_min <= eta_max < 1");
  std::visit(Overload{
                 [](const ConstantEta& c) {
                   if (!(c.eta >= 0.0 && c.eta < 1.0)) fail(ErrorCode::kConfig, "constant eta must lie in [0, 1)");
                 },
                 [](const TrueOracleEta& o) {
                   if (!o.spec) fail(ErrorCode::kConfig, "true-oracle eta needs a mixture spec");
                 },
                 [](const LMLogLinearEta& l) {
                   if (!(l.a > 0.0) || !(l.k > 0.0)) fail(ErrorCode::kConfig, "eta_LM needs a > 0 and k > 0");
                   if (!l.lm) fail(ErrorCode::kConfig, "eta_LM needs a language model");
                 },
             },
             v_);
}

EtaProvider EtaProvider::lm_log_linear(double a, double k, std::shared_ptr<const NGramLM> lm, bool length_normalize) {
  return EtaProvider(LMLogLinearEta{a, k, std::move(lm), length_normalize, nullptr});
}

EtaProvider EtaProvider::with_pll_table(std::span<const TokenSeq> sentences) const {
  const auto* l = std::get_if<LMLogLinearEta>(&v_);
  if (!l) return *this;
  auto table = std::make_shared<std::map<TokenSeq, double>>();
  for (const auto& s : sentences)
    if (!table->contains(s)) table->emplace(s, l->lm->pseudo_log_likelihood(s));
  LMLogLinearEta copy = *l;
  copy.pll_table = std::move(table);
  return EtaProvider(std::move(copy), lo_, hi_);
}

std::string EtaProvider::kind() const {
  return std::visit(Overload{[](const ConstantEta&) { return std::string("constant"); },
                             [](const TrueOracleEta&) { return std::string("true_oracle"); },
                             [](const LMLogLinearEta&) { return std::string("lm"); }},
                    v_);
}

double EtaProvider::raw(const DataPoint& x) const {
  return std::visit(
      Overload{
          [](const ConstantEta& c) { return c.eta; },
          [&](const TrueOracleEta& o) {
            if (x.latent_class < 0 || static_cast<std::size_t>(x.latent_class) >= o.spec->num_classes())
              fail(ErrorCode::kInvalidArgument, "true-oracle eta needs the simulator's latent class");
            return o.spec->class_dist[static_cast<std::size_t>(x.latent_class)];
          },
          [&](const LMLogLinearEta& l) {
            if (!x.tokens || x.tokens->empty()) fail(ErrorCode::kMissingInput, "eta_LM needs the point's report tokens");
            double pll = 0.0;
            bool cached = false;
            if (l.pll_table) {
              const auto it = l.pll_table->find(*x.tokens);
              if (it != l.pll_table->end()) {
                pll = it->second;
                cached = true;
              }
            }
            if (!cached) pll = l.lm->pseudo_log_likelihood(*x.tokens);
            if (l.length_normalize) pll /= static_cast<double>(x.tokens->size());
            return l.a * std::exp(l.k * pll);
          },
      },
      v_);
}

double EtaProvider::eta_of(const DataPoint& x) const { return std::clamp(raw(x), lo_, hi_); }

EtaProvider eta_from_json(const nlohmann::json& j, std::shared_ptr<const MixtureSpec> spec,
                          std::shared_ptr<const NGramLM> lm) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    const double lo = j.value("eta_min", kEtaMinDefault);
    const double hi = j.value("eta_max", kEtaMaxDefault);
    if (kind == "constant") return EtaProvider(ConstantEta{j.at("eta").get<double>()}, lo, hi);
    if (kind == "true_oracle") return EtaProvider(TrueOracleEta{std::move(spec)}, lo, hi);
    if (kind == "lm")
      return EtaProvider(LMLogLinearEta{j.value("a", 0.2), j.value("k", 0.35), std::move(lm),
                                        j.value("length_normalize", false), nullptr},
                         lo, hi);
    fail(ErrorCode::kConfig, "unknown eta kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("malformed eta config: ") + e.what());
  }
}

}  // namespace dcl
