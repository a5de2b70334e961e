#include "ets/rebase.hpp"

#include <algorithm>
#include <cmath>

#include "ets/errors.hpp"

namespace ets {

namespace {

// Products like 4 * 0.5 can land a few ulps above an integer after the
// softmax round trip; without the slack ceil() would hand out one extra.
constexpr double kCeilSlack = 1e-9;

}  // namespace

int WeightAllocation::total() const {
  int t = 0;
  for (const auto& e : entries) t += e.weight;
  return t;
}

int WeightAllocation::weight_of(NodeId id) const {
  for (const auto& e : entries)
    if (e.id == id) return e.weight;
  return 0;
}

std::vector<NodeId> WeightAllocation::positive() const {
  std::vector<NodeId> out;
  for (const auto& e : entries)
    if (e.weight > 0) out.push_back(e.id);
  std::sort(out.begin(), out.end());
  return out;
}

WeightAllocation allocate(std::span<const ScoredLeaf> leaves, int budget, double temperature) {
  if (budget < 1) throw InvalidArgument("allocate: budget must be >= 1");
  if (leaves.empty()) throw InvalidArgument("allocate: no leaves");
  if (!(temperature > 0.0)) throw InvalidArgument("allocate: temperature must be > 0");

  std::vector<ScoredLeaf> order(leaves.begin(), leaves.end());
  std::sort(order.begin(), order.end(), [](const ScoredLeaf& a, const ScoredLeaf& b) {
    if (a.reward != b.reward) return a.reward > b.reward;
    return a.id < b.id;
  });

  const double top = order.front().reward;
  std::vector<double> mass(order.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    mass[i] = std::exp((order[i].reward - top) / temperature);
  // Suffix sums give the normaliser over the not-yet-visited leaves.
  std::vector<double> tail(order.size() + 1, 0.0);
  for (std::size_t i = order.size(); i-- > 0;) tail[i] = tail[i + 1] + mass[i];

  WeightAllocation out{.entries = {}, .budget = budget, .temperature = temperature};
  out.entries.reserve(order.size());
  int remaining = budget;
  for (std::size_t i = 0; i < order.size(); ++i) {
    int w = 0;
    if (remaining > 0 && tail[i] > 0.0) {
      const double share = remaining * (mass[i] / tail[i]);
      w = static_cast<int>(std::ceil(share - kCeilSlack));
      w = std::clamp(w, 0, remaining);
    }
    remaining -= w;
    out.entries.push_back({order[i].id, w});
  }
  // Underflowed masses can leave a sliver unassigned; it goes to the top leaf.
  if (remaining > 0) out.entries.front().weight += remaining;
  return out;
}

WeightAllocation reallocate(std::span<const ScoredLeaf> retained, int budget, double temperature) {
  return allocate(retained, budget, temperature);
}

}  // namespace ets
