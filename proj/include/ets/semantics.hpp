#pragma once

#include <span>
#include <string>
#include <vector>

#include "ets/tree.hpp"

namespace ets {

class Embedding {
 public:
  explicit Embedding(std::vector<double> v);  // rejects empty and zero vectors

  std::span<const double> values() const { return values_; }
  std::size_t dim() const { return values_.size(); }
  double norm() const { return norm_; }

  bool operator==(const Embedding&) const = default;

 private:
  std::vector<double> values_;
  double norm_ = 0.0;
};

// 1 - cos(u, v), clamped to [0, 2].
double cosine_distance(const Embedding& u, const Embedding& v);

struct ClusterAssignment {
  // labels[i] is the cluster of input i. Labels are dense and numbered in
  // order of first appearance.
  std::vector<int> labels;
  int cluster_count = 0;
};

// Average-linkage agglomerative clustering on cosine distance. Merging stops
// before the first merge whose linkage distance is >= threshold. Equal
// distances merge the pair with the smallest (lower, higher) index, where a
// cluster's index is its smallest member index.
ClusterAssignment agglomerative_cluster(std::span<const Embedding> embeddings, double threshold);

// Fraction of point pairs on which two labelings agree (same/different).
double rand_index(std::span<const int> a, std::span<const int> b);

class EmbeddingProvider;

struct LeafText {
  NodeId id{};
  std::string text;
};

struct LeafEmbedding {
  NodeId id{};
  Embedding embedding;
};

// One batched provider call for all leaves.
std::vector<LeafEmbedding> embed_last_steps(std::span<const LeafText> leaves,
                                            EmbeddingProvider& provider);

}  // namespace ets
