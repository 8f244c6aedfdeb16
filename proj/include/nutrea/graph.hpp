#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace nutrea {

using NodeId = std::size_t;
using RelationId = std::size_t;
using TokenId = std::size_t;

struct Triplet {
  NodeId head = 0;
  RelationId relation = 0;
  NodeId tail = 0;

  friend bool operator==(const Triplet&, const Triplet&) = default;
  friend auto operator<=>(const Triplet&, const Triplet&) = default;
};

/// One question with its KG subgraph. Node ids are local to the instance.
struct SubgraphInstance {
  std::string id;
  std::vector<TokenId> question_tokens;
  std::vector<Triplet> triplets;  // base relation ids only
  std::size_t num_nodes = 0;
  std::vector<NodeId> seeds;
  std::vector<NodeId> answers;

  /// Throws ValidationError naming the instance id.
  void validate(std::size_t base_relation_count) const;

  friend bool operator==(const SubgraphInstance&, const SubgraphInstance&) = default;
};

/// Augmented relation vocabulary: base relations 0..B-1, their inverses
/// B..2B-1 and a single self-loop id 2B.
class RelationVocab {
 public:
  RelationVocab() = default;
  /// Throws ValidationError on duplicate or reserved names.
  explicit RelationVocab(std::vector<std::string> base_names);

  std::size_t base_count() const { return base_names_.size(); }
  std::size_t size() const { return 2 * base_names_.size() + 1; }
  RelationId self_loop() const { return 2 * base_names_.size(); }
  RelationId inverse(RelationId r) const;
  bool is_inverse(RelationId r) const { return r >= base_count() && r < self_loop(); }
  std::string name(RelationId r) const;
  std::optional<RelationId> find(const std::string& name) const;
  const std::vector<std::string>& base_names() const { return base_names_; }

  friend bool operator==(const RelationVocab& a, const RelationVocab& b) {
    return a.base_names_ == b.base_names_;
  }

 private:
  std::vector<std::string> base_names_;
  std::unordered_map<std::string, RelationId> index_;
};

struct Edge {
  NodeId head = 0;
  RelationId relation = 0;
  NodeId tail = 0;
};

/// Subgraph with inverse and self-loop edges. Edge order: base triplets,
/// then inverses (same order), then one self-loop per node by id.
class AugmentedGraph {
 public:
  AugmentedGraph(const SubgraphInstance& instance, const RelationVocab& vocab,
                 bool inverse_edges = true);

  const SubgraphInstance& base() const { return base_; }
  std::size_t num_nodes() const { return base_.num_nodes; }
  std::size_t relation_count() const { return relation_count_; }
  const std::vector<Edge>& edges() const { return edges_; }
  /// Indices into edges() of the edges whose tail is v.
  const std::vector<std::size_t>& in_edges(NodeId v) const { return in_edges_.at(v); }
  std::size_t self_loop_edge(NodeId v) const;
  bool inverse_edges() const { return inverse_edges_; }

 private:
  SubgraphInstance base_;
  std::size_t relation_count_;
  bool inverse_edges_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> in_edges_;
};

/// Undirected hop distance from v to every node; unreachable nodes get SIZE_MAX.
std::vector<std::size_t> hop_distances(const AugmentedGraph& graph, NodeId v);

/// Edge indices of the depth-K subtree rooted at v: every edge with both
/// endpoints within undirected shortest-path distance K of v. Sorted ascending.
std::vector<std::size_t> subtree_edges(const AugmentedGraph& graph, NodeId v, std::size_t depth);

/// subtree_edges for every node at once.
std::vector<std::vector<std::size_t>> all_subtree_edges(const AugmentedGraph& graph,
                                                        std::size_t depth);

}  // namespace nutrea
