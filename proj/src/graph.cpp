#include "nutrea/graph.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <set>

#include "nutrea/error.hpp"

namespace nutrea {

void SubgraphInstance::validate(std::size_t base_relation_count) const {
  auto fail = [&](const std::string& why) {
    throw ValidationError("instance '" + id + "': " + why);
  };
  if (seeds.empty()) fail("no seed nodes");
  std::set<Triplet> seen;
  for (const auto& t : triplets) {
    if (t.head >= num_nodes || t.tail >= num_nodes) {
      fail("triplet node id out of range (num_nodes=" + std::to_string(num_nodes) + ")");
    }
    if (t.relation >= base_relation_count) {
      fail("relation id " + std::to_string(t.relation) + " out of range");
    }
    if (!seen.insert(t).second) fail("duplicate triplet");
  }
  for (auto s : seeds)
    if (s >= num_nodes) fail("seed id " + std::to_string(s) + " out of range");
  for (auto a : answers)
    if (a >= num_nodes) fail("answer id " + std::to_string(a) + " out of range");
}

RelationVocab::RelationVocab(std::vector<std::string> base_names)
    : base_names_(std::move(base_names)) {
  for (RelationId r = 0; r < base_names_.size(); ++r) {
    const auto& n = base_names_[r];
    if (n.empty() || n == "self_loop" || n.rfind("inv:", 0) == 0) {
      throw ValidationError("reserved or empty relation name '" + n + "'");
    }
    if (!index_.emplace(n, r).second) throw ValidationError("duplicate relation name '" + n + "'");
  }
}

RelationId RelationVocab::inverse(RelationId r) const {
  const auto b = base_count();
  if (r == self_loop()) return r;
  if (r < b) return r + b;
  if (r < 2 * b) return r - b;
  throw ValidationError("relation id " + std::to_string(r) + " out of range");
}

std::string RelationVocab::name(RelationId r) const {
  const auto b = base_count();
  if (r < b) return base_names_[r];
  if (r < 2 * b) return "inv:" + base_names_[r - b];
  if (r == self_loop()) return "self_loop";
  throw ValidationError("relation id " + std::to_string(r) + " out of range");
}

std::optional<RelationId> RelationVocab::find(const std::string& name) const {
  if (name == "self_loop") return self_loop();
  if (name.rfind("inv:", 0) == 0) {
    auto it = index_.find(name.substr(4));
    if (it == index_.end()) return std::nullopt;
    return it->second + base_count();
  }
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

AugmentedGraph::AugmentedGraph(const SubgraphInstance& instance, const RelationVocab& vocab,
                               bool inverse_edges)
    : base_(instance), relation_count_(vocab.size()), inverse_edges_(inverse_edges) {
  instance.validate(vocab.base_count());
  const auto n = instance.num_nodes;
  edges_.reserve((inverse_edges ? 2 : 1) * instance.triplets.size() + n);
  for (const auto& t : instance.triplets) edges_.push_back({t.head, t.relation, t.tail});
  if (inverse_edges) {
    for (const auto& t : instance.triplets)
      edges_.push_back({t.tail, vocab.inverse(t.relation), t.head});
  }
  for (NodeId v = 0; v < n; ++v) edges_.push_back({v, vocab.self_loop(), v});
  in_edges_.resize(n);
  for (std::size_t e = 0; e < edges_.size(); ++e) in_edges_[edges_[e].tail].push_back(e);
}

std::size_t AugmentedGraph::self_loop_edge(NodeId v) const {
  if (v >= num_nodes()) throw ValidationError("node " + std::to_string(v) + " out of range");
  return edges_.size() - num_nodes() + v;
}

std::vector<std::size_t> hop_distances(const AugmentedGraph& graph, NodeId v) {
  const auto n = graph.num_nodes();
  if (v >= n) throw ValidationError("node " + std::to_string(v) + " out of range");
  std::vector<std::vector<NodeId>> adj(n);
  for (const auto& e : graph.edges()) {
    if (e.head == e.tail) continue;
    adj[e.head].push_back(e.tail);
    adj[e.tail].push_back(e.head);
  }
  constexpr auto unreached = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> dist(n, unreached);
  std::deque<NodeId> queue{v};
  dist[v] = 0;
  while (!queue.empty()) {
    const auto u = queue.front();
    queue.pop_front();
    for (auto w : adj[u]) {
      if (dist[w] != unreached) continue;
      dist[w] = dist[u] + 1;
      queue.push_back(w);
    }
  }
  return dist;
}

std::vector<std::size_t> subtree_edges(const AugmentedGraph& graph, NodeId v, std::size_t depth) {
  const auto dist = hop_distances(graph, v);
  std::vector<std::size_t> out;
  const auto& edges = graph.edges();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (dist[edges[e].head] <= depth && dist[edges[e].tail] <= depth) out.push_back(e);
  }
  return out;
}

std::vector<std::vector<std::size_t>> all_subtree_edges(const AugmentedGraph& graph,
                                                        std::size_t depth) {
  const auto n = graph.num_nodes();
  std::vector<std::vector<std::size_t>> out(n);
  if (depth == 0) {
    for (NodeId v = 0; v < n; ++v) out[v] = {graph.self_loop_edge(v)};
    return out;
  }
  for (NodeId v = 0; v < n; ++v) out[v] = subtree_edges(graph, v, depth);
  return out;
}

}  // namespace nutrea
