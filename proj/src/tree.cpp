#include "ets/tree.hpp"

#include <algorithm>
#include <unordered_set>

#include "ets/errors.hpp"

namespace ets {

const char* to_string(NodeStatus s) {
  switch (s) {
    case NodeStatus::active_leaf: return "active";
    case NodeStatus::internal: return "internal";
    case NodeStatus::completed_leaf: return "completed";
  }
  return "?";
}

SearchTree::SearchTree(std::string prompt, std::int64_t prompt_tokens) {
  if (prompt_tokens < 0) throw InvalidArgument("prompt token count must be nonnegative");
  Slot root;
  root.node.id = make_node_id(0);
  root.node.token_count = prompt_tokens;
  root.node.text = std::move(prompt);
  slots_.push_back(std::move(root));
  resident_tokens_ = prompt_tokens;
  live_count_ = 1;
}

const SearchTree::Slot& SearchTree::slot(NodeId id) const {
  auto i = index_of(id);
  if (i >= slots_.size() || !slots_[i].live)
    throw InvalidNode("node " + std::to_string(i) + " is unknown or pruned");
  return slots_[i];
}

SearchTree::Slot& SearchTree::slot(NodeId id) {
  return const_cast<Slot&>(std::as_const(*this).slot(id));
}

bool SearchTree::is_live(NodeId id) const {
  auto i = index_of(id);
  return i < slots_.size() && slots_[i].live;
}

const Node& SearchTree::node(NodeId id) const { return slot(id).node; }

void SearchTree::adjust_active(NodeId from, int delta) {
  std::optional<NodeId> cur = from;
  while (cur) {
    Slot& s = slots_[index_of(*cur)];
    int before = s.active_below;
    s.active_below += delta;
    if (*cur != root()) {
      if (before == 0 && s.active_below > 0) resident_tokens_ += s.node.token_count;
      if (before > 0 && s.active_below == 0) resident_tokens_ -= s.node.token_count;
    }
    cur = s.node.parent;
  }
}

NodeId SearchTree::add_child(NodeId parent, std::string text, std::int64_t token_count,
                             double reward) {
  Slot& p = slot(parent);
  if (p.node.status == NodeStatus::completed_leaf)
    throw InvalidNode("node " + std::to_string(index_of(parent)) + " is completed");
  if (token_count < 0) throw InvalidArgument("token_count must be nonnegative");
  if (!(reward >= 0.0 && reward <= 1.0)) throw InvalidArgument("reward must lie in [0,1]");

  const NodeId id = make_node_id(static_cast<std::uint32_t>(slots_.size()));
  const bool parent_was_leaf = p.node.status == NodeStatus::active_leaf;
  const int depth = p.node.depth + 1;
  p.node.status = NodeStatus::internal;
  p.node.children.push_back(id);

  Slot child;
  child.node.id = id;
  child.node.parent = parent;
  child.node.token_count = token_count;
  child.node.text = std::move(text);
  child.node.reward = reward;
  child.node.depth = depth;
  child.node.status = NodeStatus::active_leaf;
  child.active_below = 1;
  slots_.push_back(std::move(child));  // invalidates `p`
  resident_tokens_ += token_count;
  ++live_count_;

  // An active leaf handing its slot to its first child keeps its count.
  if (!parent_was_leaf) adjust_active(parent, +1);
  return id;
}

void SearchTree::mark_completed(NodeId leaf) {
  Slot& s = slot(leaf);
  if (s.node.status != NodeStatus::active_leaf)
    throw InvalidNode("node " + std::to_string(index_of(leaf)) + " is not an active leaf");
  s.node.status = NodeStatus::completed_leaf;
  adjust_active(leaf, -1);
}

std::vector<NodeId> SearchTree::active_leaves() const {
  std::vector<NodeId> out;
  for (const auto& s : slots_)
    if (s.live && s.node.status == NodeStatus::active_leaf) out.push_back(s.node.id);
  return out;
}

std::vector<NodeId> SearchTree::completed_leaves() const {
  std::vector<NodeId> out;
  for (const auto& s : slots_)
    if (s.live && s.node.status == NodeStatus::completed_leaf) out.push_back(s.node.id);
  return out;
}

std::vector<NodeId> SearchTree::descendant_leaves(NodeId node) const {
  std::vector<NodeId> out;
  std::vector<NodeId> stack{node};
  slot(node);
  while (!stack.empty()) {
    const Node& n = slots_[index_of(stack.back())].node;
    stack.pop_back();
    if (n.status == NodeStatus::active_leaf || n.status == NodeStatus::completed_leaf) {
      out.push_back(n.id);
      continue;
    }
    for (NodeId c : n.children) stack.push_back(c);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t SearchTree::prune_to(std::span<const NodeId> retained) {
  if (retained.empty()) throw ConstraintViolation("prune_to: must retain at least one leaf");
  std::unordered_set<std::uint32_t> keep_leaf;
  for (NodeId id : retained) {
    if (slot(id).node.status != NodeStatus::active_leaf)
      throw InvalidNode("prune_to: node " + std::to_string(index_of(id)) +
                        " is not an active leaf");
    keep_leaf.insert(index_of(id));
  }

  std::vector<char> keep(slots_.size(), 0);
  keep[0] = 1;
  for (const auto& s : slots_) {
    if (!s.live) continue;
    const bool is_active = s.node.status == NodeStatus::active_leaf;
    if (s.node.status != NodeStatus::completed_leaf && !is_active) continue;
    if (is_active && !keep_leaf.contains(index_of(s.node.id))) {
      adjust_active(s.node.id, -1);
      continue;
    }
    std::optional<NodeId> cur = s.node.id;
    while (cur && !keep[index_of(*cur)]) {
      keep[index_of(*cur)] = 1;
      cur = slots_[index_of(*cur)].node.parent;
    }
  }

  std::size_t removed = 0;
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    Slot& s = slots_[i];
    if (!s.live) continue;
    if (!keep[i]) {
      s.live = false;
      s.node.children.clear();
      ++removed;
      continue;
    }
    std::erase_if(s.node.children, [&](NodeId c) { return !keep[index_of(c)]; });
  }
  live_count_ -= removed;
  return removed;
}

std::int64_t SearchTree::recompute_token_total() const {
  // Children always have larger ids than their parents, so one reverse sweep
  // propagates "has an active descendant" upward.
  std::vector<char> active(slots_.size(), 0);
  for (std::size_t i = slots_.size(); i-- > 0;) {
    const Slot& s = slots_[i];
    if (!s.live) continue;
    if (s.node.status == NodeStatus::active_leaf) active[i] = 1;
    if (active[i] && s.node.parent) active[index_of(*s.node.parent)] = 1;
  }
  std::int64_t total = slots_[0].node.token_count;
  for (std::size_t i = 1; i < slots_.size(); ++i)
    if (slots_[i].live && active[i]) total += slots_[i].node.token_count;
  return total;
}

std::vector<NodeId> SearchTree::path_to(NodeId id) const {
  std::vector<NodeId> path;
  std::optional<NodeId> cur = id;
  slot(id);
  while (cur) {
    path.push_back(*cur);
    cur = slots_[index_of(*cur)].node.parent;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<std::string> SearchTree::step_texts(NodeId id) const {
  std::vector<std::string> texts;
  for (NodeId n : path_to(id))
    if (n != root()) texts.push_back(slots_[index_of(n)].node.text);
  return texts;
}

nlohmann::json SearchTree::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& s : slots_) {
    if (!s.live) continue;
    const Node& n = s.node;
    nodes.push_back({{"id", index_of(n.id)},
                     {"parent", n.parent ? nlohmann::json(index_of(*n.parent)) : nlohmann::json()},
                     {"tokens", n.token_count},
                     {"reward", n.reward},
                     {"depth", n.depth},
                     {"status", to_string(n.status)},
                     {"text", n.text}});
  }
  return {{"root", 0}, {"live_tokens", resident_tokens_}, {"nodes", std::move(nodes)}};
}

}  // namespace ets
