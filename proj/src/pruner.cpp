#include "ets/pruner.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include "ets/errors.hpp"

namespace ets {

namespace {

constexpr double kTie = 1e-12;
constexpr int kMaxBruteForceLeaves = 20;

// Index-based view of a validated instance. Leaves are sorted by id, so
// lexicographic order on leaf indices equals lexicographic order on ids.
struct Model {
  int L = 0, P = 0, K = 0;
  std::vector<NodeId> leaf_id;
  std::vector<double> weight;
  std::vector<int> cluster;
  std::vector<int> leaf_parent;             // internal index, -1 if none
  std::vector<std::vector<int>> leaf_path;  // internal indices root first
  std::vector<int> internal_parent;
  std::vector<int> bottom_up;               // internal nodes, children first
  std::vector<std::vector<int>> members;    // cluster -> leaf indices
  double weight_total = 0.0;
  double lambda_b = 0.0, lambda_d = 0.0;
  CoverageMode mode = CoverageMode::any;

  double value(double sum_w, int nodes, int covered) const {
    double v = weight_total > 0.0 ? sum_w / weight_total : 0.0;
    v -= lambda_b * static_cast<double>(nodes) / static_cast<double>(P + L);
    v += lambda_d * static_cast<double>(covered) / static_cast<double>(K);
    return v;
  }
  double node_cost() const { return lambda_b / static_cast<double>(P + L); }
  double cover_bonus() const { return lambda_d / static_cast<double>(K); }
};

struct Candidate {
  double obj = 0.0;
  int nodes = 0;
  int covered = 0;
  std::vector<int> set;  // ascending leaf indices
};

bool better(const Candidate& a, const Candidate& b) {
  if (a.obj > b.obj + kTie) return true;
  if (a.obj < b.obj - kTie) return false;
  if (a.nodes != b.nodes) return a.nodes < b.nodes;
  return std::lexicographical_compare(a.set.begin(), a.set.end(), b.set.begin(), b.set.end());
}

Model compile(const PruneInstance& inst) {
  inst.validate();
  Model m;
  m.L = static_cast<int>(inst.leaves.size());
  m.P = static_cast<int>(inst.internal_nodes.size());
  m.K = inst.cluster_count;
  m.lambda_b = inst.lambda_b;
  m.lambda_d = inst.lambda_d;
  m.mode = inst.coverage;

  std::vector<const PruneLeaf*> leaves;
  for (const auto& l : inst.leaves) leaves.push_back(&l);
  std::sort(leaves.begin(), leaves.end(), [](auto* a, auto* b) { return a->id < b->id; });

  std::unordered_map<std::uint32_t, int> internal_index;
  for (int j = 0; j < m.P; ++j) internal_index[index_of(inst.internal_nodes[static_cast<std::size_t>(j)])] = j;
  m.internal_parent.assign(static_cast<std::size_t>(m.P), -1);
  std::vector<int> depth(static_cast<std::size_t>(m.P), 0);
  m.members.assign(static_cast<std::size_t>(m.K), {});

  for (int i = 0; i < m.L; ++i) {
    const PruneLeaf& l = *leaves[static_cast<std::size_t>(i)];
    m.leaf_id.push_back(l.id);
    m.weight.push_back(l.weight);
    m.cluster.push_back(l.cluster);
    m.members[static_cast<std::size_t>(l.cluster)].push_back(i);
    std::vector<int> path;
    for (std::size_t k = 0; k < l.path.size(); ++k) {
      int j = internal_index.at(index_of(l.path[k]));
      path.push_back(j);
      depth[static_cast<std::size_t>(j)] = static_cast<int>(k);
      if (k > 0) m.internal_parent[static_cast<std::size_t>(j)] = path[k - 1];
    }
    m.leaf_parent.push_back(path.empty() ? -1 : path.back());
    m.leaf_path.push_back(std::move(path));
  }
  // Summed in index order so that every evaluation path agrees bit for bit.
  for (double w : m.weight) m.weight_total += w;

  m.bottom_up.resize(static_cast<std::size_t>(m.P));
  for (int j = 0; j < m.P; ++j) m.bottom_up[static_cast<std::size_t>(j)] = j;
  std::stable_sort(m.bottom_up.begin(), m.bottom_up.end(),
                   [&](int a, int b) { return depth[static_cast<std::size_t>(a)] > depth[static_cast<std::size_t>(b)]; });
  return m;
}

Candidate evaluate(const Model& m, std::vector<int> set) {
  Candidate c;
  std::sort(set.begin(), set.end());
  std::vector<char> used(static_cast<std::size_t>(m.P), 0);
  std::vector<int> in_cluster(static_cast<std::size_t>(m.K), 0);
  double sum_w = 0.0;
  int nodes = 0;
  for (int i : set) {
    sum_w += m.weight[static_cast<std::size_t>(i)];
    ++nodes;
    for (int j : m.leaf_path[static_cast<std::size_t>(i)]) {
      if (!used[static_cast<std::size_t>(j)]) {
        used[static_cast<std::size_t>(j)] = 1;
        ++nodes;
      }
    }
    ++in_cluster[static_cast<std::size_t>(m.cluster[static_cast<std::size_t>(i)])];
  }
  int covered = 0;
  for (int k = 0; k < m.K; ++k) {
    const int have = in_cluster[static_cast<std::size_t>(k)];
    const int size = static_cast<int>(m.members[static_cast<std::size_t>(k)].size());
    if (m.mode == CoverageMode::any ? have > 0 : (size > 0 && have == size)) ++covered;
  }
  c.obj = m.value(sum_w, nodes, covered);
  c.nodes = nodes;
  c.covered = covered;
  c.set = std::move(set);
  return c;
}

PruneDecision to_decision(const Model& m, const Candidate& c) {
  PruneDecision d;
  for (int i : c.set) d.retained_leaves.push_back(m.leaf_id[static_cast<std::size_t>(i)]);
  d.objective_value = c.obj;
  d.nodes_retained = c.nodes;
  d.clusters_covered = c.covered;
  return d;
}

// Depth-first branch and bound over leaf decisions.
//
// Bound: a tree DP over the undecided leaves in which each leaf is worth its
// weight share, minus its own node cost, plus the full coverage bonus of
// its cluster whenever that cluster could still be newly covered. Internal
// node costs are charged exactly; coverage is the only relaxation (it may be
// counted once per leaf instead of once per cluster), so the bound is tight
// whenever the DP picks at most one new leaf per newly covered cluster.
class BranchAndBound {
 public:
  BranchAndBound(const Model& m, std::chrono::steady_clock::time_point deadline)
      : m_(m), deadline_(deadline) {
    dec_.assign(static_cast<std::size_t>(m.L), kFree);
    in_below_.assign(static_cast<std::size_t>(m.P), 0);
    cl_in_.assign(static_cast<std::size_t>(m.K), 0);
    cl_out_.assign(static_cast<std::size_t>(m.K), 0);
    gain_.resize(static_cast<std::size_t>(m.P));
    sel_.resize(static_cast<std::size_t>(m.P));
  }

  bool run() {
    search();
    return !timed_out_;
  }

  const std::optional<Candidate>& best() const { return best_; }
  std::uint64_t nodes_visited() const { return visited_; }

 private:
  static constexpr signed char kFree = -1, kOut = 0, kIn = 1;

  double leaf_prize(int i) const {
    const auto ui = static_cast<std::size_t>(i);
    double p = (m_.weight_total > 0.0 ? m_.weight[ui] / m_.weight_total : 0.0) - m_.node_cost();
    const auto k = static_cast<std::size_t>(m_.cluster[ui]);
    if (m_.mode == CoverageMode::any) {
      if (cl_in_[k] == 0) p += m_.cover_bonus();
    } else if (cl_out_[k] == 0) {
      p += m_.cover_bonus();
    }
    return p;
  }

  struct Relaxation {
    double bound = 0.0;
    std::vector<int> chosen;  // forced-in plus DP-picked free leaves
  };

  Relaxation relax() {
    std::fill(gain_.begin(), gain_.end(), 0.0);
    double top = 0.0;
    std::vector<double> prize(static_cast<std::size_t>(m_.L), 0.0);
    for (int i = 0; i < m_.L; ++i) {
      if (dec_[static_cast<std::size_t>(i)] != kFree) continue;
      const double p = leaf_prize(i);
      prize[static_cast<std::size_t>(i)] = p;
      if (p <= 0.0) continue;
      const int parent = m_.leaf_parent[static_cast<std::size_t>(i)];
      (parent < 0 ? top : gain_[static_cast<std::size_t>(parent)]) += p;
    }
    for (int j : m_.bottom_up) {
      const auto uj = static_cast<std::size_t>(j);
      const double contrib =
          in_below_[uj] > 0 ? gain_[uj] : std::max(0.0, gain_[uj] - m_.node_cost());
      const int parent = m_.internal_parent[uj];
      (parent < 0 ? top : gain_[static_cast<std::size_t>(parent)]) += contrib;
    }
    Relaxation r;
    r.bound = forced_value() + top;

    // Top-down: internal nodes in reverse bottom-up order see parents first.
    for (auto it = m_.bottom_up.rbegin(); it != m_.bottom_up.rend(); ++it) {
      const auto uj = static_cast<std::size_t>(*it);
      const int parent = m_.internal_parent[uj];
      const bool parent_ok = parent < 0 || sel_[static_cast<std::size_t>(parent)];
      sel_[uj] = parent_ok && (in_below_[uj] > 0 || gain_[uj] - m_.node_cost() > 0.0);
    }
    for (int i = 0; i < m_.L; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      if (dec_[ui] == kIn) {
        r.chosen.push_back(i);
      } else if (dec_[ui] == kFree && prize[ui] > 0.0) {
        const int parent = m_.leaf_parent[ui];
        if (parent < 0 || sel_[static_cast<std::size_t>(parent)]) r.chosen.push_back(i);
      }
    }
    return r;
  }

  double forced_value() const {
    if (forced_.empty()) return 0.0;
    double sum_w = 0.0;
    int nodes = static_cast<int>(forced_.size());
    for (int v : in_below_) nodes += v > 0 ? 1 : 0;
    for (int i : forced_) sum_w += m_.weight[static_cast<std::size_t>(i)];
    int covered = 0;
    for (int k = 0; k < m_.K; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      const int size = static_cast<int>(m_.members[uk].size());
      if (m_.mode == CoverageMode::any ? cl_in_[uk] > 0 : cl_in_[uk] == size) ++covered;
    }
    return m_.value(sum_w, nodes, covered);
  }

  int nodes_lower_bound() const {
    if (!forced_.empty()) {
      int nodes = static_cast<int>(forced_.size());
      for (int v : in_below_) nodes += v > 0 ? 1 : 0;
      return nodes;
    }
    int best = m_.P + m_.L + 1;
    for (int i = 0; i < m_.L; ++i)
      if (dec_[static_cast<std::size_t>(i)] == kFree)
        best = std::min(best, static_cast<int>(m_.leaf_path[static_cast<std::size_t>(i)].size()) + 1);
    return best;
  }

  // Smallest sorted index list reachable from the current decisions.
  std::vector<int> lex_lower_bound() const {
    std::vector<int> out;
    if (forced_.empty()) {
      for (int i = 0; i < m_.L; ++i)
        if (dec_[static_cast<std::size_t>(i)] == kFree) return {i};
      return out;
    }
    const int hi = *std::max_element(forced_.begin(), forced_.end());
    for (int i = 0; i <= hi; ++i)
      if (dec_[static_cast<std::size_t>(i)] != kOut) out.push_back(i);
    return out;
  }

  // True when nothing below the current node can beat the incumbent.
  bool dominated(double bound) const {
    if (!best_) return false;
    if (bound < best_->obj - kTie) return true;
    if (bound > best_->obj + kTie) return false;
    const int nlb = nodes_lower_bound();
    if (nlb > best_->nodes) return true;
    if (nlb < best_->nodes) return false;
    auto lex = lex_lower_bound();
    return !std::lexicographical_compare(lex.begin(), lex.end(), best_->set.begin(), best_->set.end());
  }

  void offer(std::vector<int> set) {
    if (set.empty()) return;
    Candidate c = evaluate(m_, std::move(set));
    if (!best_ || better(c, *best_)) best_ = std::move(c);
  }

  void set_decision(int i, signed char d) {
    const auto ui = static_cast<std::size_t>(i);
    const auto k = static_cast<std::size_t>(m_.cluster[ui]);
    dec_[ui] = d;
    if (d == kIn) {
      forced_.push_back(i);
      for (int j : m_.leaf_path[ui]) ++in_below_[static_cast<std::size_t>(j)];
      ++cl_in_[k];
    } else {
      ++cl_out_[k];
    }
  }

  void clear_decision(int i) {
    const auto ui = static_cast<std::size_t>(i);
    const auto k = static_cast<std::size_t>(m_.cluster[ui]);
    if (dec_[ui] == kIn) {
      forced_.pop_back();
      for (int j : m_.leaf_path[ui]) --in_below_[static_cast<std::size_t>(j)];
      --cl_in_[k];
    } else {
      --cl_out_[k];
    }
    dec_[ui] = kFree;
  }

  int pick_branch_leaf(const Relaxation& r, bool tight) const {
    if (!tight) {
      std::vector<int> picked(static_cast<std::size_t>(m_.K), 0);
      for (int i : r.chosen)
        if (dec_[static_cast<std::size_t>(i)] == kFree) ++picked[static_cast<std::size_t>(m_.cluster[static_cast<std::size_t>(i)])];
      for (int k = 0; k < m_.K; ++k) {
        const auto uk = static_cast<std::size_t>(k);
        if (picked[uk] == 0) continue;
        bool over = false;
        if (m_.mode == CoverageMode::any) {
          over = cl_in_[uk] == 0 && picked[uk] >= 2;
        } else {
          const int size = static_cast<int>(m_.members[uk].size());
          over = cl_in_[uk] + picked[uk] != size || picked[uk] >= 2;
        }
        if (!over) continue;
        // Prefer a member the relaxation left out, then any free member.
        int fallback = -1;
        for (int i : m_.members[uk]) {
          if (dec_[static_cast<std::size_t>(i)] != kFree) continue;
          if (fallback < 0) fallback = i;
          if (m_.mode == CoverageMode::all &&
              !std::binary_search(r.chosen.begin(), r.chosen.end(), i))
            return i;
        }
        if (fallback >= 0) return fallback;
      }
    }
    for (int i = 0; i < m_.L; ++i)
      if (dec_[static_cast<std::size_t>(i)] == kFree) return i;
    return -1;
  }

  void search() {
    if (timed_out_) return;
    if ((++visited_ & 127) == 0 && std::chrono::steady_clock::now() > deadline_) {
      timed_out_ = true;
      return;
    }
    Relaxation r = relax();
    if (dominated(r.bound)) return;
    bool tight = false;
    if (!r.chosen.empty()) {
      Candidate c = evaluate(m_, r.chosen);
      tight = r.bound - c.obj <= kTie;
      if (!best_ || better(c, *best_)) best_ = std::move(c);
      if (dominated(r.bound)) return;
    }
    const int leaf = pick_branch_leaf(r, tight);
    if (leaf < 0) return;
    for (signed char d : {kIn, kOut}) {
      set_decision(leaf, d);
      search();
      clear_decision(leaf);
      if (timed_out_) return;
    }
  }

  const Model& m_;
  std::chrono::steady_clock::time_point deadline_;
  std::vector<signed char> dec_;
  std::vector<int> forced_;
  std::vector<int> in_below_;
  std::vector<int> cl_in_, cl_out_;
  std::vector<double> gain_;
  std::vector<char> sel_;
  std::optional<Candidate> best_;
  std::uint64_t visited_ = 0;
  bool timed_out_ = false;
};


// Exact tree DP over coverage states. For every internal node it keeps, per
// state, the best selection inside its subtree with that node retained.
// A state packs a cluster mask with a nonempty flag: under `any` coverage
// the mask is the set of covered clusters, under `all` it is the set of
// clusters with an excluded member. Both combine by OR across subtrees, and
// the order (objective, -nodes, smallest differing leaf) is additive over
// disjoint subtrees, so keeping one best entry per state is exact.
class CoverageDp {
 public:
  static constexpr int kMaxClusters = 16;

  explicit CoverageDp(const Model& m) : m_(m), words_((m.L + 63) / 64) {
    if (m.K > kMaxClusters) throw InvalidArgument("coverage dp: too many clusters");
    slot_.assign(std::size_t{2} << m.K, -1);
    child_internal_.assign(static_cast<std::size_t>(m.P), {});
    child_leaf_.assign(static_cast<std::size_t>(m.P), {});
    below_.assign(static_cast<std::size_t>(m.P), 0);
    for (int j = 0; j < m.P; ++j) {
      const int p = m.internal_parent[static_cast<std::size_t>(j)];
      (p < 0 ? top_internal_ : child_internal_[static_cast<std::size_t>(p)]).push_back(j);
    }
    for (int i = 0; i < m.L; ++i) {
      const int p = m.leaf_parent[static_cast<std::size_t>(i)];
      (p < 0 ? top_leaf_ : child_leaf_[static_cast<std::size_t>(p)]).push_back(i);
      for (int j : m.leaf_path[static_cast<std::size_t>(i)])
        below_[static_cast<std::size_t>(j)] |= 1u << m.cluster[static_cast<std::size_t>(i)];
    }
  }

  // Upper estimate of merge work, used to choose between solvers.
  static double work_estimate(const Model& m) {
    if (m.K > kMaxClusters) return std::numeric_limits<double>::infinity();
    std::vector<std::uint32_t> below(static_cast<std::size_t>(m.P), 0);
    std::vector<double> work(static_cast<std::size_t>(m.P), 0.0);
    for (int i = 0; i < m.L; ++i)
      for (int j : m.leaf_path[static_cast<std::size_t>(i)])
        below[static_cast<std::size_t>(j)] |= 1u << m.cluster[static_cast<std::size_t>(i)];
    auto states = [](std::uint32_t mask) { return std::ldexp(2.0, std::popcount(mask)); };
    double total = 0.0;
    for (int i = 0; i < m.L; ++i) {
      const int p = m.leaf_parent[static_cast<std::size_t>(i)];
      total += p < 0 ? states((1u << m.K) - 1) : states(below[static_cast<std::size_t>(p)]);
    }
    for (int j = 0; j < m.P; ++j) {
      const int p = m.internal_parent[static_cast<std::size_t>(j)];
      const double parent_states = p < 0 ? states((1u << m.K) - 1) : states(below[static_cast<std::size_t>(p)]);
      total += parent_states * states(below[static_cast<std::size_t>(j)]);
    }
    return total;
  }

  Candidate run() {
    Table acc = start(0.0, 0);
    for (int j : top_internal_) acc = merge(acc, node_table(j), skip_mask_internal(j));
    for (int i : top_leaf_) acc = merge(acc, leaf_table(i), skip_mask_leaf(i));

    int best = -1;
    double best_total = 0.0;
    for (std::size_t e = 0; e < acc.key.size(); ++e) {
      if ((acc.key[e] & 1u) == 0) continue;
      const double total = acc.f[e] + bonus(acc.key[e] >> 1);
      if (best < 0 || ahead(total, acc.nodes[e], acc, e, best_total, acc.nodes[static_cast<std::size_t>(best)],
                            acc, static_cast<std::size_t>(best))) {
        best = static_cast<int>(e);
        best_total = total;
      }
    }
    std::vector<int> set;
    for (int i = 0; i < m_.L; ++i)
      if (acc.bits[static_cast<std::size_t>(best) * words_ + static_cast<std::size_t>(i / 64)] >> (i % 64) & 1u)
        set.push_back(i);
    return evaluate(m_, std::move(set));
  }

 private:
  struct Table {
    std::vector<std::uint32_t> key;  // mask << 1 | nonempty
    std::vector<double> f;           // weight share minus node cost
    std::vector<int> nodes;
    std::vector<std::uint64_t> bits;  // words_ per entry
  };

  double bonus(std::uint32_t mask) const {
    int covered = 0;
    if (m_.mode == CoverageMode::any) {
      covered = std::popcount(mask);
    } else {
      for (int k = 0; k < m_.K; ++k)
        if (!m_.members[static_cast<std::size_t>(k)].empty() && !(mask >> k & 1u)) ++covered;
    }
    return m_.cover_bonus() * covered;
  }

  // Strict preference of entry a over entry b.
  bool ahead(double fa, int na, const Table& ta, std::size_t ea, double fb, int nb, const Table& tb,
             std::size_t eb) const {
    if (fa > fb + kTie) return true;
    if (fa < fb - kTie) return false;
    if (na != nb) return na < nb;
    for (std::size_t w = 0; w < words_; ++w) {
      const std::uint64_t x = ta.bits[ea * words_ + w], y = tb.bits[eb * words_ + w];
      if (x == y) continue;
      return (x & (x ^ y) & (~(x ^ y) + 1)) != 0;
    }
    return false;
  }

  Table start(double f, int nodes) const {
    Table t;
    t.key.push_back(0);
    t.f.push_back(f);
    t.nodes.push_back(nodes);
    t.bits.assign(words_, 0);
    return t;
  }

  std::uint32_t skip_mask_leaf(int i) const {
    return m_.mode == CoverageMode::all ? 1u << m_.cluster[static_cast<std::size_t>(i)] : 0u;
  }
  std::uint32_t skip_mask_internal(int j) const {
    return m_.mode == CoverageMode::all ? below_[static_cast<std::size_t>(j)] : 0u;
  }

  Table leaf_table(int i) const {
    const auto ui = static_cast<std::size_t>(i);
    const double share = m_.weight_total > 0.0 ? m_.weight[ui] / m_.weight_total : 0.0;
    const std::uint32_t mask = m_.mode == CoverageMode::any ? 1u << m_.cluster[ui] : 0u;
    Table t;
    t.key.push_back(mask << 1 | 1u);
    t.f.push_back(share - m_.node_cost());
    t.nodes.push_back(1);
    t.bits.assign(words_, 0);
    t.bits[ui / 64] |= std::uint64_t{1} << (ui % 64);
    return t;
  }

  Table node_table(int j) {
    Table acc = start(-m_.node_cost(), 1);
    for (int c : child_internal_[static_cast<std::size_t>(j)]) acc = merge(acc, node_table(c), skip_mask_internal(c));
    for (int i : child_leaf_[static_cast<std::size_t>(j)]) acc = merge(acc, leaf_table(i), skip_mask_leaf(i));
    Table out;
    for (std::size_t e = 0; e < acc.key.size(); ++e) {
      if ((acc.key[e] & 1u) == 0) continue;
      out.key.push_back(acc.key[e]);
      out.f.push_back(acc.f[e]);
      out.nodes.push_back(acc.nodes[e]);
      out.bits.insert(out.bits.end(), acc.bits.begin() + static_cast<std::ptrdiff_t>(e * words_),
                      acc.bits.begin() + static_cast<std::ptrdiff_t>((e + 1) * words_));
    }
    return out;
  }

  // acc x (child or skip), one best entry per resulting key.
  Table merge(const Table& acc, const Table& child, std::uint32_t skip_mask) {
    Table out;
    std::vector<std::uint64_t> scratch(words_);
    auto offer = [&](std::uint32_t key, double f, int nodes, const std::uint64_t* a, const std::uint64_t* b) {
      for (std::size_t w = 0; w < words_; ++w) scratch[w] = a[w] | (b ? b[w] : 0);
      int& s = slot_[key];
      if (s < 0) {
        s = static_cast<int>(out.key.size());
        out.key.push_back(key);
        out.f.push_back(f);
        out.nodes.push_back(nodes);
        out.bits.insert(out.bits.end(), scratch.begin(), scratch.end());
        return;
      }
      const auto e = static_cast<std::size_t>(s);
      if (fresh_better(f, nodes, scratch.data(), out, e)) {
        out.f[e] = f;
        out.nodes[e] = nodes;
        std::copy(scratch.begin(), scratch.end(), out.bits.begin() + static_cast<std::ptrdiff_t>(e * words_));
      }
    };
    for (std::size_t a = 0; a < acc.key.size(); ++a) {
      const std::uint64_t* abits = acc.bits.data() + a * words_;
      offer(acc.key[a] | skip_mask << 1, acc.f[a], acc.nodes[a], abits, nullptr);
      for (std::size_t c = 0; c < child.key.size(); ++c)
        offer(acc.key[a] | child.key[c], acc.f[a] + child.f[c], acc.nodes[a] + child.nodes[c], abits,
              child.bits.data() + c * words_);
    }
    for (std::uint32_t key : out.key) slot_[key] = -1;
    return out;
  }

  bool fresh_better(double f, int nodes, const std::uint64_t* bits, const Table& t, std::size_t e) const {
    if (f > t.f[e] + kTie) return true;
    if (f < t.f[e] - kTie) return false;
    if (nodes != t.nodes[e]) return nodes < t.nodes[e];
    for (std::size_t w = 0; w < words_; ++w) {
      const std::uint64_t x = bits[w], y = t.bits[e * words_ + w];
      if (x == y) continue;
      return (x & (x ^ y) & (~(x ^ y) + 1)) != 0;
    }
    return false;
  }

  const Model& m_;
  std::size_t words_;
  std::vector<int> slot_;
  std::vector<std::vector<int>> child_internal_, child_leaf_;
  std::vector<int> top_internal_, top_leaf_;
  std::vector<std::uint32_t> below_;
};

}  // namespace

double PruneInstance::weight_total() const {
  double t = 0.0;
  std::vector<const PruneLeaf*> sorted;
  for (const auto& l : leaves) sorted.push_back(&l);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->id < b->id; });
  for (auto* l : sorted) t += l->weight;
  return t;
}

void PruneInstance::validate() const {
  auto fail = [](const std::string& msg) { throw InvalidArgument("prune instance: " + msg); };
  if (leaves.empty()) fail("no leaves");
  if (cluster_count < 1) fail("cluster_count must be >= 1");
  if (!(lambda_b >= 0.0) || !std::isfinite(lambda_b)) fail("lambda_b must be finite and >= 0");
  if (!(lambda_d >= 0.0) || !std::isfinite(lambda_d)) fail("lambda_d must be finite and >= 0");

  std::set<std::uint32_t> internal;
  for (NodeId n : internal_nodes)
    if (!internal.insert(index_of(n)).second) fail("duplicate internal node " + std::to_string(index_of(n)));

  std::set<std::uint32_t> leaf_ids;
  std::map<std::uint32_t, std::optional<std::uint32_t>> parent_of;
  std::set<std::uint32_t> on_path;
  for (const auto& l : leaves) {
    const auto id = index_of(l.id);
    if (!leaf_ids.insert(id).second) fail("duplicate leaf " + std::to_string(id));
    if (internal.contains(id)) fail("leaf " + std::to_string(id) + " is also internal");
    if (!(l.weight >= 0.0) || !std::isfinite(l.weight)) fail("leaf weights must be finite and >= 0");
    if (l.cluster < 0 || l.cluster >= cluster_count) fail("cluster index out of range");
    std::optional<std::uint32_t> prev;
    for (NodeId n : l.path) {
      const auto j = index_of(n);
      if (!internal.contains(j)) fail("path node " + std::to_string(j) + " is not internal");
      auto [it, inserted] = parent_of.emplace(j, prev);
      if (!inserted && it->second != prev) fail("node " + std::to_string(j) + " has two parents");
      on_path.insert(j);
      prev = j;
    }
  }
  if (on_path.size() != internal.size()) fail("internal node not on any leaf path");
}

PruneInstance build_prune_instance(const SearchTree& tree, std::span<const WeightEntry> weights,
                                   const ClusterAssignment& clusters, double lambda_b,
                                   double lambda_d, CoverageMode coverage) {
  if (clusters.labels.size() != weights.size())
    throw InvalidArgument("build_prune_instance: cluster labels do not match leaves");
  PruneInstance inst;
  inst.cluster_count = std::max(1, clusters.cluster_count);
  inst.lambda_b = lambda_b;
  inst.lambda_d = lambda_d;
  inst.coverage = coverage;
  std::set<NodeId> internal;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    PruneLeaf l;
    l.id = weights[i].id;
    l.weight = weights[i].weight;
    l.cluster = clusters.labels[i];
    l.path = tree.path_to(l.id);
    l.path.pop_back();
    internal.insert(l.path.begin(), l.path.end());
    inst.leaves.push_back(std::move(l));
  }
  inst.internal_nodes.assign(internal.begin(), internal.end());
  return inst;
}

double objective(const PruneInstance& instance, std::span<const NodeId> subset) {
  if (subset.empty()) throw ConstraintViolation("objective: subset must retain at least one leaf");
  Model m = compile(instance);
  std::vector<int> set;
  for (NodeId id : subset) {
    auto it = std::lower_bound(m.leaf_id.begin(), m.leaf_id.end(), id);
    if (it == m.leaf_id.end() || *it != id)
      throw InvalidArgument("objective: " + std::to_string(index_of(id)) + " is not a candidate leaf");
    set.push_back(static_cast<int>(it - m.leaf_id.begin()));
  }
  std::sort(set.begin(), set.end());
  set.erase(std::unique(set.begin(), set.end()), set.end());
  return evaluate(m, std::move(set)).obj;
}

PruneDecision solve(const PruneInstance& instance, const SolveOptions& options) {
  constexpr double kDpWorkLimit = 2e7;
  const auto start = std::chrono::steady_clock::now();
  Model m = compile(instance);
  bool use_dp = options.strategy == SolverStrategy::coverage_dp;
  if (options.strategy == SolverStrategy::automatic) use_dp = CoverageDp::work_estimate(m) <= kDpWorkLimit;

  PruneDecision d;
  if (use_dp) {
    CoverageDp dp(m);
    d = to_decision(m, dp.run());
    d.optimal = true;
  } else {
    BranchAndBound bb(m, start + options.time_budget);
    const bool complete = bb.run();
    // The root relaxation always yields a candidate unless the budget ran
    // out first; then fall back to the best single leaf.
    Candidate best;
    if (bb.best()) {
      best = *bb.best();
    } else {
      best = evaluate(m, {0});
      for (int i = 1; i < m.L; ++i) {
        Candidate c = evaluate(m, {i});
        if (better(c, best)) best = std::move(c);
      }
    }
    d = to_decision(m, best);
    d.optimal = complete;
    d.search_nodes = bb.nodes_visited();
  }
  d.solve_time = std::chrono::steady_clock::now() - start;
  return d;
}

PruneDecision solve(const PruneInstance& instance, std::chrono::nanoseconds time_budget) {
  return solve(instance, SolveOptions{time_budget, SolverStrategy::automatic});
}

PruneDecision brute_force(const PruneInstance& instance) {
  const auto start = std::chrono::steady_clock::now();
  if (instance.leaves.size() > static_cast<std::size_t>(kMaxBruteForceLeaves))
    throw InvalidArgument("brute_force: refusing " + std::to_string(instance.leaves.size()) +
                          " leaves (limit " + std::to_string(kMaxBruteForceLeaves) + ")");
  Model m = compile(instance);
  std::optional<Candidate> best;
  const std::uint32_t limit = 1u << m.L;
  std::vector<int> set;
  for (std::uint32_t mask = 1; mask < limit; ++mask) {
    set.clear();
    for (int i = 0; i < m.L; ++i)
      if (mask & (1u << i)) set.push_back(i);
    Candidate c = evaluate(m, set);
    if (!best || better(c, *best)) best = std::move(c);
  }
  PruneDecision d = to_decision(m, *best);
  d.optimal = true;
  d.search_nodes = limit - 1;
  d.solve_time = std::chrono::steady_clock::now() - start;
  return d;
}

nlohmann::json to_json(const PruneInstance& instance) {
  nlohmann::json leaves = nlohmann::json::array();
  for (const auto& l : instance.leaves) {
    std::vector<std::uint32_t> path;
    for (NodeId n : l.path) path.push_back(index_of(n));
    leaves.push_back({{"id", index_of(l.id)}, {"weight", l.weight}, {"path", path}, {"cluster", l.cluster}});
  }
  std::vector<std::uint32_t> internal;
  for (NodeId n : instance.internal_nodes) internal.push_back(index_of(n));
  return {{"leaves", std::move(leaves)},
          {"internal_nodes", internal},
          {"cluster_count", instance.cluster_count},
          {"lambda_b", instance.lambda_b},
          {"lambda_d", instance.lambda_d},
          {"coverage", instance.coverage == CoverageMode::any ? "any" : "all"}};
}

PruneInstance prune_instance_from_json(const nlohmann::json& j) {
  PruneInstance inst;
  try {
    for (const auto& l : j.at("leaves")) {
      PruneLeaf leaf;
      leaf.id = make_node_id(l.at("id").get<std::uint32_t>());
      leaf.weight = l.at("weight").get<double>();
      leaf.cluster = l.value("cluster", 0);
      for (const auto& n : l.at("path")) leaf.path.push_back(make_node_id(n.get<std::uint32_t>()));
      inst.leaves.push_back(std::move(leaf));
    }
    for (const auto& n : j.at("internal_nodes")) inst.internal_nodes.push_back(make_node_id(n.get<std::uint32_t>()));
    inst.cluster_count = j.value("cluster_count", 1);
    inst.lambda_b = j.value("lambda_b", 0.0);
    inst.lambda_d = j.value("lambda_d", 0.0);
    const std::string cov = j.value("coverage", std::string("any"));
    if (cov != "any" && cov != "all") throw InvalidArgument("prune instance: coverage must be 'any' or 'all'");
    inst.coverage = cov == "any" ? CoverageMode::any : CoverageMode::all;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("prune instance: ") + e.what());
  }
  inst.validate();
  return inst;
}

nlohmann::json to_json(const PruneDecision& d) {
  std::vector<std::uint32_t> kept;
  for (NodeId n : d.retained_leaves) kept.push_back(index_of(n));
  return {{"retained_leaves", kept},
          {"objective", d.objective_value},
          {"optimal", d.optimal},
          {"nodes_retained", d.nodes_retained},
          {"clusters_covered", d.clusters_covered},
          {"search_nodes", d.search_nodes}};
}

}  // namespace ets
