#pragma once

// Exact solver for the KV-aware pruning program
//
//   max  sum_{i in S} W_i / sum_i W_i
//        - lambda_b * |closure(S)| / (P + L)
//        + lambda_d * |clusters covered by S| / K      subject to |S| >= 1
//
// where closure(S) is S plus every internal node on a root path of S, P is
// the number of internal nodes (root included) and L the number of
// candidate leaves. Internal-node and cluster indicators are functions of
// the leaf choice, so only the L leaf binaries are searched.
//
// Among equally good subsets (objective within 1e-12) the one with fewer
// retained nodes wins, then the lexicographically smallest sorted id list.
// Two distinct subsets with equal node counts are never prefixes of one
// another, so the latter is decided by whichever set holds the smallest id
// of their symmetric difference.

#include <chrono>
#include <cstdint>
#include <span>
#include <vector>

#include "ets/rebase.hpp"
#include "ets/semantics.hpp"
#include "ets/tree.hpp"
#include "json.hpp"

namespace ets {

enum class CoverageMode {
  any,  // a cluster counts once any member is retained
  all,  // a cluster counts only when every member is retained
};

struct PruneLeaf {
  NodeId id{};
  double weight = 0.0;
  std::vector<NodeId> path;  // internal nodes, root first, ending at the parent
  int cluster = 0;
};

struct PruneInstance {
  std::vector<PruneLeaf> leaves;
  std::vector<NodeId> internal_nodes;
  int cluster_count = 1;
  double lambda_b = 0.0;
  double lambda_d = 0.0;
  CoverageMode coverage = CoverageMode::any;

  double weight_total() const;
  void validate() const;  // throws InvalidArgument
};

struct PruneDecision {
  std::vector<NodeId> retained_leaves;  // ascending
  double objective_value = 0.0;
  bool optimal = false;
  int nodes_retained = 0;
  int clusters_covered = 0;
  std::chrono::nanoseconds solve_time{0};
  std::uint64_t search_nodes = 0;
};

// Candidate leaves (with their allocation weights) taken from `tree`;
// `clusters.labels[i]` belongs to `weights[i]`.
PruneInstance build_prune_instance(const SearchTree& tree, std::span<const WeightEntry> weights,
                                   const ClusterAssignment& clusters, double lambda_b,
                                   double lambda_d, CoverageMode coverage = CoverageMode::any);

double objective(const PruneInstance& instance, std::span<const NodeId> subset);

enum class SolverStrategy {
  automatic,         // coverage DP when its table work is small, else branch and bound
  coverage_dp,       // tree DP over covered-cluster masks; throws when K > 16
  branch_and_bound,  // leaf-binary search bounded by a tree DP relaxation
};

struct SolveOptions {
  std::chrono::nanoseconds time_budget = std::chrono::milliseconds(250);
  SolverStrategy strategy = SolverStrategy::automatic;
};

PruneDecision solve(const PruneInstance& instance, const SolveOptions& options);
PruneDecision solve(const PruneInstance& instance,
                    std::chrono::nanoseconds time_budget = std::chrono::milliseconds(250));

// Exhaustive reference over all 2^L - 1 subsets; refuses L > 20.
PruneDecision brute_force(const PruneInstance& instance);

nlohmann::json to_json(const PruneInstance& instance);
PruneInstance prune_instance_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PruneDecision& decision);

}  // namespace ets
