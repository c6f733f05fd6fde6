// Command-line front end over the C API.
//
//   dcl <simulate|train|eval|verify-bounds|sweep> --config FILE [--out DIR] [--set /ptr=value ...]
//   dcl repro <cifar-analog|cross-modal> [--config FILE] [--out DIR] [--set /ptr=value ...]
//
// Exit codes: 0 ok, 1 usage or unknown subcommand, 2 config error,
// 3 numeric/internal failure, 4 bound check failed, 5 missing input or I/O.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dcl/dcl.h"

namespace {

int exit_code(dcl_status s) {
  switch (s) {
    case DCL_OK: return 0;
    case DCL_ERR_INVALID_ARGUMENT:
    case DCL_ERR_CONFIG: return 2;
    case DCL_ERR_NUMERIC:
    case DCL_ERR_INTERNAL: return 3;
    case DCL_ERR_CHECK_FAILED: return 4;
    case DCL_ERR_MISSING_INPUT:
    case DCL_ERR_IO: return 5;
  }
  return 3;
}

// "--set /train/epochs=5": the value is JSON when it parses, a string otherwise.
bool parse_overrides(const std::vector<std::string>& sets, nlohmann::json& out) {
  out = nlohmann::json::object();
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || s.empty() || s[0] != '/') {
      std::fprintf(stderr, "dcl: --set expects /json/pointer=value, got '%s'\n", s.c_str());
      return false;
    }
    const std::string text = s.substr(eq + 1);
    nlohmann::json v = nlohmann::json::parse(text, nullptr, false);
    out[s.substr(0, eq)] = v.is_discarded() ? nlohmann::json(text) : v;
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"debiased contrastive learning testbed"};
  app.set_version_flag("--version", dcl_version());
  app.require_subcommand(1);

  std::string config, out;
  std::vector<std::string> sets;
  bool quiet = false;
  auto common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("-c,--config", config, "JSON config file");
    if (config_required) opt->required();
    sub->add_option("-o,--out", out, "output directory (default: $DCL_OUTPUT_ROOT, then ./out)");
    sub->add_option("--set", sets, "override a config field: /json/pointer=value");
    sub->add_flag("-q,--quiet", quiet, "no progress output");
  };
  for (const char* name : {"simulate", "train", "eval", "verify-bounds", "sweep"}) common(app.add_subcommand(name), true);
  std::string target;
  auto* repro = app.add_subcommand("repro", "rerun a published-experiment analog");
  repro->add_option("target", target, "cifar-analog or cross-modal")
      ->required()
      ->check(CLI::IsMember({"cifar-analog", "cross-modal"}));
  common(repro, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  nlohmann::json overrides;
  if (!parse_overrides(sets, overrides)) return 1;
  const std::string sub = app.get_subcommands().front()->get_name();
  const std::string ov = overrides.empty() ? std::string() : overrides.dump();
  const dcl_status st = dcl_run(sub.c_str(), target.c_str(), config.empty() ? nullptr : config.c_str(),
                                out.empty() ? nullptr : out.c_str(), ov.empty() ? nullptr : ov.c_str(), quiet ? 1 : 0);
  if (st != DCL_OK) std::fprintf(stderr, "dcl: %s\n", dcl_last_error_message());
  return exit_code(st);
}
