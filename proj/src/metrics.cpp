#include "ets/metrics.hpp"

#include <algorithm>

#include "ets/errors.hpp"

namespace ets {

void SearchMetrics::record_step(const SearchTree& tree, std::int64_t new_tokens, std::int64_t calls,
                                bool include_prompt) {
  std::int64_t kv = tree.live_token_total();
  if (!include_prompt) kv -= tree.node(tree.root()).token_count;
  per_step_kv_tokens.push_back(kv);
  cumulative_kv_tokens += kv;
  generated_tokens += new_tokens;
  model_calls += calls;
}

std::int64_t SearchMetrics::peak_kv_tokens() const {
  if (per_step_kv_tokens.empty()) return 0;
  return *std::max_element(per_step_kv_tokens.begin(), per_step_kv_tokens.end());
}

double SearchMetrics::mean_kv_tokens() const {
  if (per_step_kv_tokens.empty()) return 0.0;
  return static_cast<double>(cumulative_kv_tokens) / static_cast<double>(per_step_kv_tokens.size());
}

std::chrono::nanoseconds SearchMetrics::total_time() const {
  return generation_time + reward_time + embed_time + cluster_time + solver_time;
}

void SearchMetrics::accumulate(const SearchMetrics& o) {
  cumulative_kv_tokens += o.cumulative_kv_tokens;
  generated_tokens += o.generated_tokens;
  model_calls += o.model_calls;
  reward_calls += o.reward_calls;
  embed_calls += o.embed_calls;
  solves += o.solves;
  solves_nonoptimal += o.solves_nonoptimal;
  generation_time += o.generation_time;
  reward_time += o.reward_time;
  embed_time += o.embed_time;
  cluster_time += o.cluster_time;
  solver_time += o.solver_time;
}

double kv_reduction(const SearchMetrics& baseline, const SearchMetrics& candidate) {
  if (candidate.cumulative_kv_tokens == 0) throw InvalidArgument("kv_reduction: candidate has zero cumulative KV");
  return static_cast<double>(baseline.cumulative_kv_tokens) / static_cast<double>(candidate.cumulative_kv_tokens);
}

double overhead_fraction(const SearchMetrics& m) {
  const auto total = m.total_time().count();
  if (total <= 0) return 0.0;
  const auto overhead = (m.embed_time + m.cluster_time + m.solver_time).count();
  return static_cast<double>(overhead) / static_cast<double>(total);
}

nlohmann::json to_json(const SearchMetrics& m) {
  return {{"per_step_kv_tokens", m.per_step_kv_tokens},
          {"cumulative_kv_tokens", m.cumulative_kv_tokens},
          {"generated_tokens", m.generated_tokens},
          {"model_calls", m.model_calls},
          {"reward_calls", m.reward_calls},
          {"embed_calls", m.embed_calls},
          {"solves", m.solves},
          {"solves_nonoptimal", m.solves_nonoptimal}};
}

nlohmann::json timing_json(const SearchMetrics& m) {
  auto sec = [](std::chrono::nanoseconds d) { return std::chrono::duration<double>(d).count(); };
  return {{"generation_s", sec(m.generation_time)},
          {"reward_s", sec(m.reward_time)},
          {"embed_s", sec(m.embed_time)},
          {"cluster_s", sec(m.cluster_time)},
          {"solver_s", sec(m.solver_time)},
          {"overhead_fraction", overhead_fraction(m)}};
}

}  // namespace ets
