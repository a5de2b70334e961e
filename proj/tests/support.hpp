#pragma once

// Independent reference implementations and generators shared by the unit
// tests and the acceptance runner. Nothing here calls into the code under
// test except for plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ets/backend.hpp"
#include "ets/pruner.hpp"
#include "ets/rebase.hpp"
#include "ets/semantics.hpp"

namespace oracle {

using ets::NodeId;

// Random forest-free tree: internal node 0 is the root, every other internal
// node hangs under an earlier one, and leaves hang under random internal
// nodes. Internal nodes left childless get a leaf so closure is well formed.
inline ets::PruneInstance random_instance(std::mt19937_64& rng, int max_leaves, int max_clusters,
                                          double lambda_b, double lambda_d,
                                          ets::CoverageMode mode = ets::CoverageMode::any) {
  std::uniform_int_distribution<int> n_internal_d(1, std::max(1, max_leaves / 2));
  const int P = n_internal_d(rng);
  std::vector<int> parent(static_cast<std::size_t>(P), -1);
  for (int j = 1; j < P; ++j) parent[static_cast<std::size_t>(j)] = std::uniform_int_distribution<int>(0, j - 1)(rng);

  std::vector<int> leaf_parent;
  std::vector<char> has_child(static_cast<std::size_t>(P), 0);
  for (int j = 1; j < P; ++j) has_child[static_cast<std::size_t>(parent[static_cast<std::size_t>(j)])] = 1;
  for (int j = 0; j < P; ++j)
    if (!has_child[static_cast<std::size_t>(j)]) leaf_parent.push_back(j);
  const int target = std::uniform_int_distribution<int>(1, max_leaves)(rng);
  while (static_cast<int>(leaf_parent.size()) < target)
    leaf_parent.push_back(std::uniform_int_distribution<int>(0, P - 1)(rng));
  while (static_cast<int>(leaf_parent.size()) > max_leaves) leaf_parent.pop_back();
  std::shuffle(leaf_parent.begin(), leaf_parent.end(), rng);

  // Internal ids 0..P-1; leaf ids follow. Internal nodes not reachable from
  // a surviving leaf are dropped from the instance.
  const int K = std::uniform_int_distribution<int>(1, max_clusters)(rng);
  ets::PruneInstance inst;
  inst.cluster_count = K;
  inst.lambda_b = lambda_b;
  inst.lambda_d = lambda_d;
  inst.coverage = mode;
  std::set<std::uint32_t> used;
  std::uniform_real_distribution<double> w(0.0, 10.0);
  for (std::size_t i = 0; i < leaf_parent.size(); ++i) {
    ets::PruneLeaf l;
    l.id = ets::make_node_id(static_cast<std::uint32_t>(P + static_cast<int>(i)));
    l.weight = std::bernoulli_distribution(0.15)(rng) ? 0.0 : std::round(w(rng) * 4.0) / 4.0;
    l.cluster = static_cast<int>(i) < K ? static_cast<int>(i) : std::uniform_int_distribution<int>(0, K - 1)(rng);
    std::vector<NodeId> path;
    for (int j = leaf_parent[i]; j >= 0; j = parent[static_cast<std::size_t>(j)]) {
      path.push_back(ets::make_node_id(static_cast<std::uint32_t>(j)));
      used.insert(static_cast<std::uint32_t>(j));
    }
    std::reverse(path.begin(), path.end());
    l.path = std::move(path);
    inst.leaves.push_back(std::move(l));
  }
  for (std::uint32_t j : used) inst.internal_nodes.push_back(ets::make_node_id(j));
  std::shuffle(inst.internal_nodes.begin(), inst.internal_nodes.end(), rng);
  // Clusters may end up empty when K exceeds the leaf count; keep K honest.
  std::set<int> present;
  for (const auto& l : inst.leaves) present.insert(l.cluster);
  if (static_cast<int>(present.size()) < K) {
    std::map<int, int> remap;
    for (int k : present) remap.emplace(k, static_cast<int>(remap.size()));
    for (auto& l : inst.leaves) l.cluster = remap.at(l.cluster);
    inst.cluster_count = static_cast<int>(remap.size());
  }
  return inst;
}

struct Evaluated {
  double value = 0.0;
  int nodes = 0;
  int covered = 0;
};

// Objective straight from the definition, on id sets.
inline Evaluated objective(const ets::PruneInstance& inst, const std::set<std::uint32_t>& subset) {
  std::vector<const ets::PruneLeaf*> sorted;
  for (const auto& l : inst.leaves) sorted.push_back(&l);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->id < b->id; });
  double total = 0.0, kept = 0.0;
  std::set<std::uint32_t> closure;
  std::map<int, int> in_cluster, cluster_size;
  for (auto* l : sorted) {
    total += l->weight;
    ++cluster_size[l->cluster];
    if (!subset.contains(ets::index_of(l->id))) continue;
    kept += l->weight;
    closure.insert(ets::index_of(l->id));
    for (NodeId n : l->path) closure.insert(ets::index_of(n));
    ++in_cluster[l->cluster];
  }
  int covered = 0;
  for (const auto& [k, size] : cluster_size) {
    const int have = in_cluster.contains(k) ? in_cluster[k] : 0;
    if (inst.coverage == ets::CoverageMode::any ? have > 0 : have == size) ++covered;
  }
  const double P = static_cast<double>(inst.internal_nodes.size());
  const double L = static_cast<double>(inst.leaves.size());
  Evaluated e;
  e.value = (total > 0.0 ? kept / total : 0.0) - inst.lambda_b * static_cast<double>(closure.size()) / (P + L) +
            inst.lambda_d * covered / inst.cluster_count;
  e.nodes = static_cast<int>(closure.size());
  e.covered = covered;
  return e;
}

struct Optimum {
  std::set<std::uint32_t> leaves;
  Evaluated eval;
};

// Exhaustive maximum with ties to fewer nodes, then to the sorted id list
// that compares lexicographically smaller.
inline Optimum exhaustive(const ets::PruneInstance& inst) {
  std::vector<std::uint32_t> ids;
  for (const auto& l : inst.leaves) ids.push_back(ets::index_of(l.id));
  std::optional<Optimum> best;
  for (std::uint32_t mask = 1; mask < (1u << ids.size()); ++mask) {
    std::set<std::uint32_t> s;
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (mask >> i & 1u) s.insert(ids[i]);
    Evaluated e = objective(inst, s);
    bool take = !best;
    if (best) {
      if (e.value > best->eval.value + 1e-12) take = true;
      else if (e.value >= best->eval.value - 1e-12) {
        if (e.nodes != best->eval.nodes) take = e.nodes < best->eval.nodes;
        else take = std::lexicographical_compare(s.begin(), s.end(), best->leaves.begin(), best->leaves.end());
      }
    }
    if (take) best = Optimum{s, e};
  }
  return *best;
}

// Sequential ceil allocation written directly from its description.
inline std::map<std::uint32_t, int> rebase(std::vector<std::pair<std::uint32_t, double>> leaves, int budget,
                                           double temperature) {
  std::sort(leaves.begin(), leaves.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  const double top = leaves.front().second;
  std::vector<double> mass;
  for (const auto& l : leaves) mass.push_back(std::exp((l.second - top) / temperature));
  std::map<std::uint32_t, int> out;
  int remaining = budget;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    double rest = 0.0;
    for (std::size_t j = i; j < leaves.size(); ++j) rest += mass[j];
    int w = static_cast<int>(std::ceil(remaining * (mass[i] / rest) - 1e-9));
    w = std::clamp(w, 0, remaining);
    out[leaves[i].first] = w;
    remaining -= w;
  }
  if (remaining > 0) out[leaves.front().first] += remaining;
  return out;
}

inline double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::clamp(1.0 - dot / std::sqrt(na * nb), 0.0, 2.0);
}

// Average linkage recomputed from member lists at every merge.
inline std::vector<int> naive_average_linkage(const std::vector<std::vector<double>>& pts, double threshold) {
  std::vector<std::vector<int>> clusters;
  for (int i = 0; i < static_cast<int>(pts.size()); ++i) clusters.push_back({i});
  while (clusters.size() > 1) {
    double best = std::numeric_limits<double>::infinity();
    std::pair<int, int> pick{-1, -1};
    std::pair<int, int> pick_key{0, 0};
    for (std::size_t a = 0; a < clusters.size(); ++a)
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        double sum = 0;
        for (int i : clusters[a])
          for (int j : clusters[b]) sum += cosine_distance(pts[static_cast<std::size_t>(i)], pts[static_cast<std::size_t>(j)]);
        const double d = sum / static_cast<double>(clusters[a].size() * clusters[b].size());
        std::pair<int, int> key{std::min(clusters[a][0], clusters[b][0]), std::max(clusters[a][0], clusters[b][0])};
        if (d < best - 1e-12 || (std::abs(d - best) <= 1e-12 && key < pick_key)) {
          best = d;
          pick = {static_cast<int>(a), static_cast<int>(b)};
          pick_key = key;
        }
      }
    if (best >= threshold) break;
    auto& into = clusters[static_cast<std::size_t>(pick.first)];
    auto& from = clusters[static_cast<std::size_t>(pick.second)];
    into.insert(into.end(), from.begin(), from.end());
    std::sort(into.begin(), into.end());
    clusters.erase(clusters.begin() + pick.second);
  }
  std::vector<int> owner(pts.size());
  for (std::size_t c = 0; c < clusters.size(); ++c)
    for (int i : clusters[c]) owner[static_cast<std::size_t>(i)] = static_cast<int>(c);
  std::map<int, int> dense;
  std::vector<int> labels;
  for (int o : owner) labels.push_back(dense.emplace(o, static_cast<int>(dense.size())).first->second);
  return labels;
}

// Embedder returning fixed vectors by text; counts calls.
class TableEmbedder final : public ets::EmbeddingProvider {
 public:
  explicit TableEmbedder(std::map<std::string, std::vector<double>> table) : table_(std::move(table)) {}
  ets::EmbedResponse embed(const ets::EmbedRequest& req) override {
    ++calls;
    ets::EmbedResponse r;
    for (const auto& t : req.texts) r.vectors.push_back(table_.at(t));
    return r;
  }
  int calls = 0;

 private:
  std::map<std::string, std::vector<double>> table_;
};

}  // namespace oracle
