#pragma once

// Run configuration: one JSON document with a section per module.
//
//   {"policy": {..}, "search": {..}, "sim": {..}, "backend": {..},
//    "suite": {..}, "compare": {..}, "sweep": {..}}
//
// Every leaf field can be overridden as "section.key". Documents and
// overrides are type-checked against the defaults before any struct is
// built, so unknown fields and wrong types are reported by name.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ets/backend.hpp"
#include "ets/engine.hpp"
#include "ets/policies.hpp"
#include "ets/simenv.hpp"
#include "json.hpp"

namespace ets {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SuiteConfig {
  std::size_t problems = 100;
  int parallelism = 0;        // 0: one thread per logical core
  std::string problems_file;  // JSONL {"id", "prompt", "prompt_tokens"?, "answer"?}; http backend only
};

struct CompareConfig {
  // "method" or "method:key=value,..." with policy keys, e.g. "ets:lambda_d=0".
  std::vector<std::string> methods{"rebase", "ets"};
  std::vector<int> widths{64};
};

struct SweepConfig {
  std::vector<double> lambda_b{1.0, 1.5, 2.0};
  double tolerance_points = 0.2;
  // "lambda_b=0" runs the same policy with lambda_b = 0; anything else is a
  // path to a summary CSV from an earlier run.
  std::string baseline = "lambda_b=0";
};

struct RunConfig {
  PolicyConfig policy;
  SearchConfig search;
  SimConfig sim;
  HttpBackendConfig backend;
  SuiteConfig suite;
  CompareConfig compare;
  SweepConfig sweep;
};

nlohmann::json default_config_json();

// Parses a config file; syntax errors carry line and column.
nlohmann::json load_config_file(const std::filesystem::path& path);

// Merges `doc` over the defaults after checking field names and types.
nlohmann::json merge_config(const nlohmann::json& doc);

// Applies one "section.key" = text override to a merged document. The text
// is converted to the type of the current value.
void apply_override(nlohmann::json& merged, const std::string& dotted_key, const std::string& text);

// Builds and validates the structs. Throws ConfigError.
RunConfig config_from_json(const nlohmann::json& merged);
nlohmann::json to_json(const RunConfig& c);

}  // namespace ets
