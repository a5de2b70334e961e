#pragma once

// The search loop and suite runner.
//
// One step: expand every weighted leaf through the generator, score the new
// trajectories in one batched reward call, record KV, retire terminal leaves
// (each completion shrinks the width by one), then let the policy decide
// which leaves survive and how many continuations each receives.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ets/backend.hpp"
#include "ets/metrics.hpp"
#include "ets/policies.hpp"
#include "json.hpp"

namespace ets {

enum class BackendKind { sim, http };

struct SearchConfig {
  PolicyConfig policy;
  int max_depth = 6;
  std::uint64_t seed = 0;
  BackendKind backend = BackendKind::sim;
  // fp16 K and V for 48 layers x 8 KV heads x 128 dims.
  double kv_bytes_per_token = 196608.0;
  bool include_prompt_kv = true;
  bool trace = false;
  std::string stop = "\n\n";

  void validate() const;  // throws InvalidArgument
};

void to_json(nlohmann::json& j, const SearchConfig& c);
void from_json(const nlohmann::json& j, SearchConfig& c);

struct Problem {
  std::string id;
  std::string prompt;
  std::int64_t prompt_tokens = 0;
  std::uint64_t seed = 0;  // root of every random stream for this problem
  // Answer checker; empty when no ground truth is known.
  std::function<bool(const std::string&)> check;
};

struct Providers {
  GenerationProvider* generator = nullptr;
  RewardProvider* reward = nullptr;
  EmbeddingProvider* embedder = nullptr;
};

struct CompletedTrajectory {
  std::string answer;
  double reward = 0.0;
};

struct ProblemError {
  std::string kind;  // transport, schema, reward_range, backend, internal
  std::string message;
};

struct ProblemResult {
  std::string problem_id;
  std::string final_answer;
  bool answered = false;
  std::optional<bool> correct;
  std::vector<CompletedTrajectory> completed;
  SearchMetrics metrics;
  std::optional<ProblemError> error;
  std::optional<nlohmann::json> trace;
};

// Deterministic record (no timings) and the timing sidecar.
nlohmann::json to_json(const ProblemResult& r);
nlohmann::json timing_json(const ProblemResult& r);

// Weighted majority vote: reward mass per identical answer, ties to the
// lexicographically smallest answer. nullopt when nothing completed.
std::optional<std::string> aggregate(const std::vector<CompletedTrajectory>& completed);

ProblemResult run_problem(const Problem& problem, const SearchConfig& cfg, const Providers& providers);

struct SuiteSummary {
  std::size_t problems = 0;
  std::size_t correct = 0;
  std::size_t answered = 0;
  std::size_t errors = 0;
  double accuracy = 0.0;
  double mean_cumulative_kv = 0.0;
  double mean_generated_tokens = 0.0;
  double mean_model_calls = 0.0;
  SearchMetrics totals;
};

struct SuiteResult {
  std::vector<ProblemResult> results;  // input order
  SuiteSummary summary;
};

SuiteSummary summarize(const std::vector<ProblemResult>& results);

// Runs problems on up to `parallelism` threads. A failing problem is
// recorded in its result and does not stop the suite.
SuiteResult run_suite(const std::vector<Problem>& problems, const SearchConfig& cfg,
                      const Providers& providers, int parallelism);

// Suite of sim problems addressed by (suite seed, index).
std::vector<Problem> sim_problems(const SimEnv& env, std::uint64_t suite_seed, std::size_t count);

}  // namespace ets
