#pragma once

// Seeded synthetic reasoning environment.
//
// A problem is a sequence of `depth` decisions, each among `moves_per_depth`
// moves of which `gold_moves` are correct. Sampled steps render as
// "d{depth}:m{move}:v{variant}"; variants are surface rewrites of the same
// move. The reward model scores the fraction of gold steps plus noise, and
// the embedder maps every variant of a move close to a shared direction.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace ets {

struct SimConfig {
  int depth = 6;
  int moves_per_depth = 8;
  int gold_moves = 2;
  double p_good = 0.55;
  double reward_noise = 0.1;
  int embed_dim = 32;
  double embed_noise = 0.05;
  int tokens_per_step = 40;
  int variants_per_move = 4;
  int prompt_tokens = 64;
  std::uint64_t embed_seed = 0x5eedULL;

  void validate() const;  // throws InvalidArgument
};

void to_json(nlohmann::json& j, const SimConfig& c);
void from_json(const nlohmann::json& j, SimConfig& c);

struct SimProblem {
  std::uint64_t seed = 0;
  std::vector<std::vector<int>> gold;  // per depth, sorted ascending
  std::string canonical_answer;

  std::string prompt() const;  // "sim-problem:<seed>"
};

struct SimStep {
  std::string text;
  int move = 0;
  int variant = 0;
  std::int64_t token_count = 0;
  bool terminal = false;
};

struct ParsedStep {
  int depth = 0;
  int move = 0;
  int variant = 0;
};

class SimEnv {
 public:
  explicit SimEnv(SimConfig cfg);

  const SimConfig& config() const { return cfg_; }

  SimProblem make_problem(std::uint64_t problem_seed) const;
  // Problem `index` of the suite seeded by `suite_seed`.
  SimProblem problem_at(std::uint64_t suite_seed, std::uint64_t index) const;
  // Inverse of SimProblem::prompt(); throws InvalidArgument.
  SimProblem problem_from_prompt(std::string_view prompt) const;

  SimStep gen_step(const SimProblem& problem, std::span<const std::string> prefix,
                   std::mt19937_64& rng) const;
  double score(const SimProblem& problem, std::span<const std::string> trajectory) const;
  std::vector<double> embed(std::string_view step_text) const;
  bool check_answer(const SimProblem& problem, std::string_view answer) const;

  // Move tuple "m0-m1-..." of a full trajectory.
  static std::string render_answer(std::span<const std::string> trajectory);
  static ParsedStep parse_step(std::string_view text);  // throws InvalidArgument

 private:
  SimConfig cfg_;
};

}  // namespace ets
