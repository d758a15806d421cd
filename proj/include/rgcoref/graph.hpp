#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rgcoref {

class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Direction-based edge types of a dependency graph.
enum class Relation : std::uint8_t { kHeadToDep = 0, kDepToHead = 1, kSelfLoop = 2 };

inline constexpr std::size_t kNumRelations = 3;
inline constexpr std::array<Relation, kNumRelations> kRelations = {
    Relation::kHeadToDep, Relation::kDepToHead, Relation::kSelfLoop};

inline std::size_t index_of(Relation r) { return static_cast<std::size_t>(r); }

inline std::string_view to_string(Relation r) {
  switch (r) {
    case Relation::kHeadToDep: return "head_to_dep";
    case Relation::kDepToHead: return "dep_to_head";
    case Relation::kSelfLoop: return "self_loop";
  }
  throw std::invalid_argument("bad relation");
}

/// Head value marking a sentence root.
inline constexpr std::int64_t kRoot = -1;

struct Edge {
  std::size_t src;
  std::size_t dst;
  Relation rel;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/**
 * Directed multigraph with relation-typed edges. Construction indexes the
 * incoming edges of every (node, relation) pair so propagation can walk
 * them in a fixed order.
 */
class RelationalGraph {
 public:
  RelationalGraph() = default;
  RelationalGraph(std::size_t num_nodes, std::vector<Edge> edges)
      : num_nodes_(num_nodes), edges_(std::move(edges)) {
    std::vector<std::size_t> counts(num_nodes_ * kNumRelations, 0);
    for (const auto& e : edges_) {
      if (e.src >= num_nodes_ || e.dst >= num_nodes_)
        throw GraphError("edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) +
                         ") outside " + std::to_string(num_nodes_) + " nodes");
      ++counts[slot(e.dst, e.rel)];
    }
    offsets_.assign(counts.size() + 1, 0);
    for (std::size_t i = 0; i < counts.size(); ++i) offsets_[i + 1] = offsets_[i] + counts[i];
    incoming_.resize(edges_.size());
    std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (std::size_t k = 0; k < edges_.size(); ++k) {
      const auto& e = edges_[k];
      incoming_[fill[slot(e.dst, e.rel)]++] = k;
    }
  }

  std::size_t num_nodes() const noexcept { return num_nodes_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }

  /// |N_r(v)|: number of edges (., v, r).
  std::size_t in_degree(std::size_t v, Relation r) const {
    return offsets_[slot(v, r) + 1] - offsets_[slot(v, r)];
  }
  std::size_t in_degree(std::size_t v) const {
    return offsets_[slot(v, Relation::kSelfLoop) + 1] - offsets_[slot(v, Relation::kHeadToDep)];
  }

  /// Indices into edges() of the edges (., v, r), in insertion order.
  std::span<const std::size_t> incoming(std::size_t v, Relation r) const {
    const auto b = offsets_[slot(v, r)];
    return {incoming_.data() + b, offsets_[slot(v, r) + 1] - b};
  }

  /// Checks the dependency-graph invariants: one self-loop per node, and a
  /// reverse dep->head edge for every head->dep edge.
  void check_invariants() const {
    for (std::size_t v = 0; v < num_nodes_; ++v) {
      const auto loops = incoming(v, Relation::kSelfLoop);
      if (loops.size() != 1 || edges_[loops[0]].src != v)
        throw GraphError("node " + std::to_string(v) + " must have exactly one self-loop");
    }
    for (const auto& e : edges_) {
      if (e.rel != Relation::kHeadToDep) continue;
      bool found = false;
      for (auto k : incoming(e.src, Relation::kDepToHead)) found |= edges_[k].src == e.dst;
      if (!found)
        throw GraphError("head_to_dep edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) +
                         ") has no reverse dep_to_head edge");
    }
  }

 private:
  std::size_t slot(std::size_t v, Relation r) const { return v * kNumRelations + index_of(r); }

  std::size_t num_nodes_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_ = {0};
  std::vector<std::size_t> incoming_;
};

/// Builds the three-relation graph of one snippet from per-token heads.
/// Sentences stay disconnected; ROOT adds nothing beyond the self-loop.
inline RelationalGraph build_graph(std::span<const std::int64_t> heads,
                                   std::span<const int> sentence_ids) {
  const std::size_t n = heads.size();
  if (sentence_ids.size() != n)
    throw GraphError("heads and sentence ids differ in length (" + std::to_string(n) + " vs " +
                     std::to_string(sentence_ids.size()) + ")");
  std::vector<Edge> edges;
  edges.reserve(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto h = heads[i];
    if (h == kRoot) continue;
    if (h < 0 || static_cast<std::size_t>(h) >= n)
      throw GraphError("token " + std::to_string(i) + ": head " + std::to_string(h) +
                       " out of range for " + std::to_string(n) + " tokens");
    const auto hu = static_cast<std::size_t>(h);
    if (hu == i) throw GraphError("token " + std::to_string(i) + " is its own head");
    if (sentence_ids[hu] != sentence_ids[i])
      throw GraphError("token " + std::to_string(i) + " (sentence " + std::to_string(sentence_ids[i]) +
                       ") has head " + std::to_string(hu) + " in sentence " +
                       std::to_string(sentence_ids[hu]));
    edges.push_back({hu, i, Relation::kHeadToDep});
    edges.push_back({i, hu, Relation::kDepToHead});
  }
  for (std::size_t i = 0; i < n; ++i) edges.push_back({i, i, Relation::kSelfLoop});
  return RelationalGraph(n, std::move(edges));
}

/// Disjoint union of several graphs; example k owns nodes [first, second).
struct BatchedGraph {
  RelationalGraph graph;
  std::vector<std::pair<std::size_t, std::size_t>> boundaries;

  std::size_t num_graphs() const { return boundaries.size(); }
};

inline BatchedGraph batch(std::span<const RelationalGraph* const> graphs) {
  if (graphs.empty()) throw GraphError("cannot batch an empty list of graphs");
  std::size_t total_edges = 0;
  for (const auto* g : graphs) total_edges += g->edges().size();
  std::vector<Edge> edges;
  edges.reserve(total_edges);
  BatchedGraph out;
  std::size_t offset = 0;
  for (const auto* g : graphs) {
    for (const auto& e : g->edges()) edges.push_back({e.src + offset, e.dst + offset, e.rel});
    out.boundaries.emplace_back(offset, offset + g->num_nodes());
    offset += g->num_nodes();
  }
  out.graph = RelationalGraph(offset, std::move(edges));
  return out;
}

inline BatchedGraph batch(std::span<const RelationalGraph> graphs) {
  std::vector<const RelationalGraph*> ptrs;
  for (const auto& g : graphs) ptrs.push_back(&g);
  return batch(std::span<const RelationalGraph* const>(ptrs));
}

}  // namespace rgcoref
