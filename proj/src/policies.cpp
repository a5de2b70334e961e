#include "ets/policies.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ets/backend.hpp"
#include "ets/errors.hpp"

namespace ets {

namespace {

using Clock = std::chrono::steady_clock;

bool by_reward(const ScoredLeaf& a, const ScoredLeaf& b) {
  if (a.reward != b.reward) return a.reward > b.reward;
  return a.id < b.id;
}

void check_budget(int budget, std::size_t leaves) {
  if (budget < 1) throw InvalidArgument("selection budget must be >= 1");
  if (leaves == 0) throw InvalidArgument("selection needs at least one leaf");
}

}  // namespace

const char* to_string(Method m) {
  switch (m) {
    case Method::beam: return "beam";
    case Method::dvts: return "dvts";
    case Method::rebase: return "rebase";
    case Method::ets: return "ets";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "beam") return Method::beam;
  if (s == "dvts") return Method::dvts;
  if (s == "rebase") return Method::rebase;
  if (s == "ets") return Method::ets;
  throw InvalidArgument("unknown method '" + s + "' (expected beam, dvts, rebase or ets)");
}

int KeepK::resolve(int width) const {
  if (!sqrt) return value;
  return std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(width)))));
}

std::string KeepK::str() const { return sqrt ? "sqrt" : std::to_string(value); }

KeepK KeepK::parse(const std::string& s) {
  if (s == "sqrt") return {true, 0};
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || v < 1) throw InvalidArgument("keep_k must be 'sqrt' or a positive integer, got '" + s + "'");
  return {false, v};
}

void PolicyConfig::validate() const {
  auto fail = [](const std::string& m) { throw InvalidArgument("policy: " + m); };
  if (width < 1) fail("width must be >= 1");
  if (!keep_k.sqrt && keep_k.value < 1) fail("keep_k must be >= 1");
  if (method == Method::dvts && keep_k.resolve(width) > width) fail("dvts: keep_k subtrees must not exceed width");
  if (!(rebase_temperature > 0.0)) fail("rebase_temperature must be > 0");
  if (!(lambda_b >= 0.0) || !std::isfinite(lambda_b)) fail("lambda_b must be >= 0");
  if (!(lambda_d >= 0.0) || !std::isfinite(lambda_d)) fail("lambda_d must be >= 0");
  if (!(cluster_threshold > 0.0)) fail("cluster_threshold must be > 0");
  if (!(sampling_temperature > 0.0)) fail("sampling_temperature must be > 0");
  if (solver_budget.count() < 1) fail("solver_budget_ms must be >= 1");
}

void to_json(nlohmann::json& j, const PolicyConfig& c) {
  j = {{"method", to_string(c.method)},
       {"width", c.width},
       {"keep_k", c.keep_k.str()},
       {"rebase_temperature", c.rebase_temperature},
       {"lambda_b", c.lambda_b},
       {"lambda_d", c.lambda_d},
       {"cluster_threshold", c.cluster_threshold},
       {"sampling_temperature", c.sampling_temperature},
       {"coverage", c.coverage == CoverageMode::any ? "any" : "all"},
       {"solver_budget_ms", c.solver_budget.count()}};
}

void from_json(const nlohmann::json& j, PolicyConfig& c) {
  PolicyConfig d;
  c.method = method_from_string(j.value("method", std::string(to_string(d.method))));
  c.width = j.value("width", d.width);
  if (j.contains("keep_k")) {
    const auto& k = j.at("keep_k");
    c.keep_k = k.is_string() ? KeepK::parse(k.get<std::string>()) : KeepK{false, k.get<int>()};
  }
  c.rebase_temperature = j.value("rebase_temperature", d.rebase_temperature);
  c.lambda_b = j.value("lambda_b", d.lambda_b);
  c.lambda_d = j.value("lambda_d", d.lambda_d);
  c.cluster_threshold = j.value("cluster_threshold", d.cluster_threshold);
  c.sampling_temperature = j.value("sampling_temperature", d.sampling_temperature);
  const std::string cov = j.value("coverage", std::string("any"));
  if (cov != "any" && cov != "all") throw InvalidArgument("policy: coverage must be 'any' or 'all'");
  c.coverage = cov == "any" ? CoverageMode::any : CoverageMode::all;
  c.solver_budget = std::chrono::milliseconds(j.value("solver_budget_ms", d.solver_budget.count()));
}

WeightAllocation beam_select(std::span<const ScoredLeaf> leaves, const PolicyConfig& cfg, int budget) {
  check_budget(budget, leaves.size());
  std::vector<ScoredLeaf> order(leaves.begin(), leaves.end());
  std::sort(order.begin(), order.end(), by_reward);
  const int keep = std::min({cfg.keep_k.resolve(cfg.width), static_cast<int>(order.size()), budget});
  WeightAllocation out{.entries = {}, .budget = budget, .temperature = 0.0};
  for (int i = 0; i < static_cast<int>(order.size()); ++i) {
    int w = 0;
    if (i < keep) w = budget / keep + (i < budget % keep ? 1 : 0);
    out.entries.push_back({order[static_cast<std::size_t>(i)].id, w});
  }
  return out;
}

WeightAllocation dvts_select(std::span<const SubtreeLeaf> leaves, const PolicyConfig& cfg, int budget) {
  check_budget(budget, leaves.size());
  const int subtrees = cfg.keep_k.resolve(cfg.width);
  std::map<int, std::vector<ScoredLeaf>> groups;
  for (const auto& l : leaves) {
    if (l.subtree < 0 || l.subtree >= subtrees)
      throw InvalidArgument("dvts_select: leaf " + std::to_string(index_of(l.id)) +
                            " has subtree tag " + std::to_string(l.subtree) + " outside [0," +
                            std::to_string(subtrees) + ")");
    groups[l.subtree].push_back({l.id, l.reward});
  }
  const int active = static_cast<int>(groups.size());
  WeightAllocation out{.entries = {}, .budget = budget, .temperature = 0.0};
  int g = 0;
  for (auto& [tag, members] : groups) {
    std::sort(members.begin(), members.end(), by_reward);
    const int share = budget / active + (g < budget % active ? 1 : 0);
    for (std::size_t i = 0; i < members.size(); ++i)
      out.entries.push_back({members[i].id, i == 0 ? share : 0});
    ++g;
  }
  return out;
}

WeightAllocation rebase_select(std::span<const ScoredLeaf> leaves, const PolicyConfig& cfg, int budget) {
  check_budget(budget, leaves.size());
  return allocate(leaves, budget, cfg.rebase_temperature);
}

EtsSelection ets_select(const SearchTree& tree, std::span<const CandidateLeaf> leaves,
                        const PolicyConfig& cfg, int budget, EmbeddingProvider& embedder) {
  check_budget(budget, leaves.size());
  std::vector<ScoredLeaf> scored;
  scored.reserve(leaves.size());
  for (const auto& l : leaves) scored.push_back({l.id, l.reward});

  EtsSelection sel;
  sel.initial = allocate(scored, budget, cfg.rebase_temperature);

  // Clusters are listed in the allocation's order so that labels line up
  // with the weight entries handed to the instance builder.
  std::vector<LeafText> texts;
  texts.reserve(leaves.size());
  for (const auto& e : sel.initial.entries) {
    auto it = std::find_if(leaves.begin(), leaves.end(), [&](const CandidateLeaf& l) { return l.id == e.id; });
    texts.push_back({e.id, it->last_step});
  }
  if (cfg.lambda_d > 0.0 && texts.size() > 1) {
    auto t0 = Clock::now();
    auto embedded = embed_last_steps(texts, embedder);
    auto t1 = Clock::now();
    std::vector<Embedding> vectors;
    vectors.reserve(embedded.size());
    for (auto& e : embedded) vectors.push_back(std::move(e.embedding));
    sel.clusters = agglomerative_cluster(vectors, cfg.cluster_threshold);
    sel.embed_time = t1 - t0;
    sel.cluster_time = Clock::now() - t1;
    sel.embed_calls = 1;
  } else {
    // The coverage term is inert; one cluster keeps the instance well-formed.
    sel.clusters.labels.assign(texts.size(), 0);
    sel.clusters.cluster_count = 1;
  }

  PruneInstance inst = build_prune_instance(tree, sel.initial.entries, sel.clusters, cfg.lambda_b,
                                            cfg.lambda_d, cfg.coverage);
  sel.decision = solve(inst, cfg.solver_budget);

  // Nothing carrying budget was pruned: the initial weights stand.
  if (sel.decision.retained_leaves == sel.initial.positive()) {
    sel.allocation = sel.initial;
    return sel;
  }
  std::vector<ScoredLeaf> retained;
  for (const auto& s : scored)
    if (std::binary_search(sel.decision.retained_leaves.begin(), sel.decision.retained_leaves.end(), s.id))
      retained.push_back(s);
  sel.allocation = reallocate(retained, budget, cfg.rebase_temperature);
  return sel;
}

}  // namespace ets
