#pragma once

// Efficiency accounting for one search.
//
// KV is sampled once per search step, after pruning and expansion, as the
// resident token total of the tree. The cumulative figure is the sum of
// those samples. Generated tokens stand in for FLOPs.

#include <chrono>
#include <cstdint>
#include <vector>

#include "ets/tree.hpp"
#include "json.hpp"

namespace ets {

struct SearchMetrics {
  std::vector<std::int64_t> per_step_kv_tokens;
  std::int64_t cumulative_kv_tokens = 0;
  std::int64_t generated_tokens = 0;
  std::int64_t model_calls = 0;
  std::int64_t reward_calls = 0;
  std::int64_t embed_calls = 0;
  std::int64_t solves = 0;
  std::int64_t solves_nonoptimal = 0;

  std::chrono::nanoseconds generation_time{0};
  std::chrono::nanoseconds reward_time{0};
  std::chrono::nanoseconds embed_time{0};
  std::chrono::nanoseconds cluster_time{0};
  std::chrono::nanoseconds solver_time{0};

  // Appends the tree's resident KV (optionally without the prompt) and
  // accumulates generation counters.
  void record_step(const SearchTree& tree, std::int64_t new_tokens, std::int64_t calls,
                   bool include_prompt = true);

  std::int64_t peak_kv_tokens() const;
  double mean_kv_tokens() const;
  std::chrono::nanoseconds total_time() const;

  // Folds another problem's counters into this one (per-step lists are not merged).
  void accumulate(const SearchMetrics& other);
};

// baseline.cumulative / candidate.cumulative; throws InvalidArgument when the
// candidate total is zero.
double kv_reduction(const SearchMetrics& baseline, const SearchMetrics& candidate);

// (embed + cluster + solver time) / total timed runtime; 0 when nothing was timed.
double overhead_fraction(const SearchMetrics& m);

// Deterministic counters only; timings are emitted separately.
nlohmann::json to_json(const SearchMetrics& m);
nlohmann::json timing_json(const SearchMetrics& m);

}  // namespace ets
