#pragma once

// Search tree of reasoning steps.
//
// Each node stores only the tokens of its own step, so the KV footprint of a
// set of trajectories is the token sum over the union of their root paths.
// The root holds the prompt and is always resident.
//
// Completed leaves stay in the tree (they are needed for final voting and
// for descendant queries) but their KV is considered released: a node counts
// toward live_token_total() only while some active leaf lies in its subtree.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace ets {

enum class NodeId : std::uint32_t {};

constexpr std::uint32_t index_of(NodeId id) { return static_cast<std::uint32_t>(id); }
constexpr NodeId make_node_id(std::uint32_t v) { return static_cast<NodeId>(v); }

enum class NodeStatus { active_leaf, internal, completed_leaf };

const char* to_string(NodeStatus s);

struct Node {
  NodeId id{};
  std::optional<NodeId> parent;
  std::int64_t token_count = 0;
  std::string text;
  double reward = 0.0;
  int depth = 0;
  NodeStatus status = NodeStatus::internal;
  std::vector<NodeId> children;
};

class SearchTree {
 public:
  SearchTree(std::string prompt, std::int64_t prompt_tokens);

  NodeId root() const { return make_node_id(0); }

  NodeId add_child(NodeId parent, std::string text, std::int64_t token_count, double reward);

  // Freezes an active leaf. Its KV (and that of ancestors left without any
  // active descendant) stops counting toward live_token_total().
  void mark_completed(NodeId leaf);

  std::vector<NodeId> active_leaves() const;
  std::vector<NodeId> completed_leaves() const;
  std::vector<NodeId> descendant_leaves(NodeId node) const;

  // Keeps the root paths of `retained` (all active leaves) plus every
  // completed leaf. Returns the number of nodes removed.
  std::size_t prune_to(std::span<const NodeId> retained);

  std::int64_t live_token_total() const { return resident_tokens_; }
  // From-scratch recomputation of live_token_total(), for invariant checks.
  std::int64_t recompute_token_total() const;

  bool is_live(NodeId id) const;
  const Node& node(NodeId id) const;
  std::size_t live_count() const { return live_count_; }

  // Root-first node path ending at `id`.
  std::vector<NodeId> path_to(NodeId id) const;
  // Step texts along the path, excluding the root prompt.
  std::vector<std::string> step_texts(NodeId id) const;

  nlohmann::json to_json() const;

 private:
  struct Slot {
    Node node;
    bool live = true;
    int active_below = 0;  // active leaves in this subtree (self included)
  };

  const Slot& slot(NodeId id) const;
  Slot& slot(NodeId id);
  void adjust_active(NodeId from, int delta);

  std::vector<Slot> slots_;
  std::int64_t resident_tokens_ = 0;
  std::size_t live_count_ = 0;
};

}  // namespace ets
