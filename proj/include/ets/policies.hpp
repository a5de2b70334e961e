#pragma once

// Per-step selection policies. Each returns a WeightAllocation whose weights
// sum to the current width; leaves with weight 0 are pruned by the engine.

#include <chrono>
#include <optional>
#include <span>
#include <string>

#include "ets/pruner.hpp"
#include "ets/rebase.hpp"
#include "ets/semantics.hpp"
#include "ets/tree.hpp"
#include "json.hpp"

namespace ets {

class EmbeddingProvider;

enum class Method { beam, dvts, rebase, ets };

const char* to_string(Method m);
Method method_from_string(const std::string& s);  // throws InvalidArgument

// Number of leaves (beam) or subtrees (DVTS) to keep: fixed, or round(sqrt(N)).
struct KeepK {
  bool sqrt = false;
  int value = 4;

  int resolve(int width) const;
  std::string str() const;
  static KeepK parse(const std::string& s);  // "sqrt" or a positive integer
};

struct PolicyConfig {
  Method method = Method::ets;
  int width = 64;
  KeepK keep_k;
  double rebase_temperature = 0.2;
  double lambda_b = 1.0;
  double lambda_d = 1.0;
  double cluster_threshold = 0.3;
  double sampling_temperature = 1.0;
  CoverageMode coverage = CoverageMode::any;
  std::chrono::milliseconds solver_budget{250};

  void validate() const;  // throws InvalidArgument
};

void to_json(nlohmann::json& j, const PolicyConfig& c);
void from_json(const nlohmann::json& j, PolicyConfig& c);

WeightAllocation beam_select(std::span<const ScoredLeaf> leaves, const PolicyConfig& cfg, int budget);

struct SubtreeLeaf {
  NodeId id{};
  double reward = 0.0;
  int subtree = -1;
};

// Each subtree with surviving leaves keeps its best leaf. The budget is
// split evenly across those subtrees, remainder to the lowest indices.
WeightAllocation dvts_select(std::span<const SubtreeLeaf> leaves, const PolicyConfig& cfg, int budget);

WeightAllocation rebase_select(std::span<const ScoredLeaf> leaves, const PolicyConfig& cfg, int budget);

struct CandidateLeaf {
  NodeId id{};
  double reward = 0.0;
  std::string last_step;
};

struct EtsSelection {
  WeightAllocation initial;  // plain REBASE weights fed to the solver
  ClusterAssignment clusters;
  PruneDecision decision;
  WeightAllocation allocation;  // reallocation over the retained leaves
  std::chrono::nanoseconds embed_time{0};
  std::chrono::nanoseconds cluster_time{0};
  int embed_calls = 0;
};

// REBASE weights -> embed and cluster last steps -> solve the pruning
// program -> REBASE again over the survivors. The tree is only read.
EtsSelection ets_select(const SearchTree& tree, std::span<const CandidateLeaf> leaves,
                        const PolicyConfig& cfg, int budget, EmbeddingProvider& embedder);

}  // namespace ets
