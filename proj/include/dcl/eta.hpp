#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <variant>

#include <json.hpp>

#include "dcl/mixture.hpp"
#include "dcl/text.hpp"

namespace dcl {

struct ConstantEta {
  double eta = 0.05;
};

struct TrueOracleEta {
  std::shared_ptr<const MixtureSpec> spec;
};

/// eta = a * p_LM(x)^k = a * exp(k * PLL(x)); with length_normalize the PLL
/// is divided by the sequence length first.
struct LMLogLinearEta {
  double a = 0.2;
  double k = 0.35;
  std::shared_ptr<const NGramLM> lm;
  bool length_normalize = false;
  // PLL per sentence, precomputed for the sentences a run will see.
  std::shared_ptr<const std::map<TokenSeq, double>> pll_table;
};

inline constexpr double kEtaMinDefault = 1e-4;
inline constexpr double kEtaMaxDefault = 0.9;

class EtaProvider {
 public:
  using Variant = std::variant<ConstantEta, TrueOracleEta, LMLogLinearEta>;

  EtaProvider() : EtaProvider(ConstantEta{}) {}
  explicit EtaProvider(Variant v, double eta_min = kEtaMinDefault, double eta_max = kEtaMaxDefault);

  static EtaProvider constant(double eta) { return EtaProvider(ConstantEta{eta}); }
  static EtaProvider true_oracle(std::shared_ptr<const MixtureSpec> spec) {
    return EtaProvider(TrueOracleEta{std::move(spec)});
  }
  static EtaProvider lm_log_linear(double a, double k, std::shared_ptr<const NGramLM> lm,
                                   bool length_normalize = false);

  /// Copy whose LM variant looks PLL values up in a table built from `sentences`.
  EtaProvider with_pll_table(std::span<const TokenSeq> sentences) const;

  const Variant& variant() const noexcept { return v_; }
  double eta_min() const noexcept { return lo_; }
  double eta_max() const noexcept { return hi_; }
  std::string kind() const;

  /// Unclamped value; eta_of clamps it.
  double raw(const DataPoint& x) const;
  double eta_of(const DataPoint& x) const;
  double operator()(const DataPoint& x) const { return eta_of(x); }

 private:
  Variant v_;
  double lo_, hi_;
};

inline double eta_of(const EtaProvider& p, const DataPoint& x) { return p.eta_of(x); }

/// Builds a provider from {"kind": "constant"|"true_oracle"|"lm", ...}.
/// `spec` backs the oracle; `lm` backs the LM variant (required only for it).
EtaProvider eta_from_json(const nlohmann::json& j, std::shared_ptr<const MixtureSpec> spec,
                          std::shared_ptr<const NGramLM> lm);

}  // namespace dcl
