#include "ets/semantics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ets/backend.hpp"
#include "ets/errors.hpp"

namespace ets {

Embedding::Embedding(std::vector<double> v) : values_(std::move(v)) {
  if (values_.empty()) throw InvalidArgument("embedding must be non-empty");
  double sq = 0.0;
  for (double x : values_) {
    if (!std::isfinite(x)) throw InvalidArgument("embedding has non-finite component");
    sq += x * x;
  }
  norm_ = std::sqrt(sq);
  if (!(norm_ > 0.0)) throw InvalidArgument("zero embedding vector");
}

double cosine_distance(const Embedding& u, const Embedding& v) {
  if (u.dim() != v.dim())
    throw InvalidArgument("cosine_distance: dimension mismatch (" + std::to_string(u.dim()) +
                          " vs " + std::to_string(v.dim()) + ")");
  double dot = 0.0;
  auto a = u.values();
  auto b = v.values();
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return std::clamp(1.0 - dot / (u.norm() * v.norm()), 0.0, 2.0);
}

ClusterAssignment agglomerative_cluster(std::span<const Embedding> embeddings, double threshold) {
  const std::size_t n = embeddings.size();
  if (n == 0) throw InvalidArgument("agglomerative_cluster: no embeddings");
  if (!(threshold > 0.0)) throw InvalidArgument("agglomerative_cluster: threshold must be > 0");

  // dist is indexed by cluster representative (smallest member index).
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      dist[i * n + j] = dist[j * n + i] = cosine_distance(embeddings[i], embeddings[j]);

  std::vector<std::size_t> owner(n);  // point -> representative
  std::vector<std::size_t> size(n, 1);
  std::vector<char> alive(n, 1);
  for (std::size_t i = 0; i < n; ++i) owner[i] = i;

  for (std::size_t merges = 0; merges + 1 < n; ++merges) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < n; ++a) {
      if (!alive[a]) continue;
      for (std::size_t b = a + 1; b < n; ++b) {
        if (!alive[b]) continue;
        if (dist[a * n + b] < best) {
          best = dist[a * n + b];
          ba = a;
          bb = b;
        }
      }
    }
    if (!(best < threshold)) break;

    // Average linkage via the Lance-Williams update.
    const double wa = static_cast<double>(size[ba]);
    const double wb = static_cast<double>(size[bb]);
    for (std::size_t c = 0; c < n; ++c) {
      if (!alive[c] || c == ba || c == bb) continue;
      const double d = (wa * dist[ba * n + c] + wb * dist[bb * n + c]) / (wa + wb);
      dist[ba * n + c] = dist[c * n + ba] = d;
    }
    size[ba] += size[bb];
    alive[bb] = 0;
    for (std::size_t p = 0; p < n; ++p)
      if (owner[p] == bb) owner[p] = ba;
  }

  ClusterAssignment out;
  out.labels.assign(n, -1);
  std::vector<int> label_of(n, -1);
  for (std::size_t p = 0; p < n; ++p) {
    int& l = label_of[owner[p]];
    if (l < 0) l = out.cluster_count++;
    out.labels[p] = l;
  }
  return out;
}

double rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw InvalidArgument("rand_index: size mismatch");
  const std::size_t n = a.size();
  if (n < 2) return 1.0;
  std::size_t agree = 0, pairs = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      agree += ((a[i] == a[j]) == (b[i] == b[j])) ? 1 : 0;
      ++pairs;
    }
  return static_cast<double>(agree) / static_cast<double>(pairs);
}

std::vector<LeafEmbedding> embed_last_steps(std::span<const LeafText> leaves,
                                            EmbeddingProvider& provider) {
  std::vector<LeafEmbedding> out;
  if (leaves.empty()) return out;
  EmbedRequest req;
  req.texts.reserve(leaves.size());
  for (const auto& l : leaves) req.texts.push_back(l.text);
  EmbedResponse resp = provider.embed(req);
  if (resp.vectors.size() != leaves.size())
    throw SchemaError("embed: expected " + std::to_string(leaves.size()) + " vectors, got " +
                      std::to_string(resp.vectors.size()));
  out.reserve(leaves.size());
  for (const auto& v : resp.vectors)
    if (v.size() != resp.vectors.front().size())
      throw SchemaError("embed: vectors of unequal dimension in one batch");
  for (std::size_t i = 0; i < leaves.size(); ++i)
    out.push_back({leaves[i].id, Embedding(std::move(resp.vectors[i]))});
  return out;
}

}  // namespace ets
