#pragma once

// Reward-balanced continuation allocation.
//
// Leaves are visited from highest to lowest reward. Each takes
// ceil(remaining * softmax mass among the not-yet-visited leaves) of the
// remaining budget, so the budget is always used up exactly.

#include <cstdint>
#include <span>
#include <vector>

#include "ets/tree.hpp"

namespace ets {

struct ScoredLeaf {
  NodeId id{};
  double reward = 0.0;
};

struct WeightEntry {
  NodeId id{};
  int weight = 0;
};

struct WeightAllocation {
  std::vector<WeightEntry> entries;  // visiting order: reward desc, id asc
  int budget = 0;
  double temperature = 0.0;

  int total() const;
  int weight_of(NodeId id) const;  // 0 when absent
  std::vector<NodeId> positive() const;  // ids with weight > 0, ascending
};

WeightAllocation allocate(std::span<const ScoredLeaf> leaves, int budget, double temperature);

// Same procedure over the leaves that survived pruning.
WeightAllocation reallocate(std::span<const ScoredLeaf> retained, int budget, double temperature);

}  // namespace ets
