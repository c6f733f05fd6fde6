#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcl/mixture.hpp"

namespace dcl {

/// FNV-1a 64 over the canonical dump (sorted keys, no whitespace), as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

/// Reads a JSON file; a missing file raises kMissingInput naming the path.
nlohmann::json load_json_file(const std::string& path);

/// Applies {"/json/pointer": value, ...} on top of `config`.
void apply_overrides(nlohmann::json& config, const nlohmann::json& overrides);

/// Builds the data model from {"kind": "gaussian_analog" | "cross_modal" |
/// "spec", ...}; the remaining keys configure the chosen builder ("spec"
/// takes a full mixture under key "spec").
MixtureSpec build_spec(const nlohmann::json& data);

struct RunRequest {
  std::string subcommand;  // simulate, train, eval, verify-bounds, sweep, repro
  std::string target;      // repro only: cifar-analog or cross-modal
  nlohmann::json config;   // already merged with overrides
  std::string output_dir;
  bool quiet = false;
};

struct RunOutcome {
  std::vector<std::string> outputs;  // files written
  bool check_passed = true;          // verify-bounds: every row holds
};

/// Dispatches a subcommand. Throws dcl::Error; an unknown subcommand is
/// kInvalidArgument. Every CSV written starts with a
/// "# config_hash=... seed=... version=..." line and holds no timing data.
RunOutcome run(const RunRequest& request);

/// Default configuration for a repro target (used when no file is given).
nlohmann::json default_repro_config(const std::string& target);

}  // namespace dcl
