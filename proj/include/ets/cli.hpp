#pragma once

// Experiment runner.
//
//   ets run      [--config F] [--out DIR] [overrides]   one suite
//   ets compare  [--config F] [--out DIR] [overrides]   compare.methods x compare.widths
//   ets sweep    [--config F] [--out DIR] [overrides]   sweep.lambda_b against a baseline
//   ets report   --in DIR                               tables from existing JSONL files
//   ets serve-mock [--port P]                           loopback sim server
//
// Exit codes: 0 success, 1 runtime failure or aborted problem, 2 usage or
// configuration error.

#include <iosfwd>
#include <string>

#include "json.hpp"

namespace ets {

// "method" or "method:key=value:key=value" with policy fields as keys.
// Returns `merged` with the method and its overrides applied.
nlohmann::json apply_method_spec(nlohmann::json merged, const std::string& spec);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ets
