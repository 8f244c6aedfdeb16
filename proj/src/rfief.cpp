#include "nutrea/rfief.hpp"

#include <algorithm>
#include <cmath>

#include "nutrea/error.hpp"

namespace nutrea {

RFMatrix relation_frequency(const AugmentedGraph& graph) {
  RFMatrix rf;
  rf.num_nodes = graph.num_nodes();
  rf.num_relations = graph.relation_count();
  rf.counts.assign(rf.num_nodes * rf.num_relations, 0);
  for (const auto& e : graph.edges()) {
    ++rf.counts[e.head * rf.num_relations + e.relation];
    if (e.tail != e.head) ++rf.counts[e.tail * rf.num_relations + e.relation];
  }
  return rf;
}

EfTable entity_frequency(const Dataset& train, bool inverse_edges) {
  if (train.instances.empty()) throw ContractError("entity_frequency needs a nonempty dataset");
  EfTable table;
  table.ef.assign(train.relation_vocab.size(), 0);
  for (const auto& inst : train.instances) {
    const AugmentedGraph graph(inst, train.relation_vocab, inverse_edges);
    const auto rf = relation_frequency(graph);
    for (NodeId v = 0; v < rf.num_nodes; ++v)
      for (RelationId r = 0; r < rf.num_relations; ++r)
        if (rf.at(v, r) > 0) ++table.ef[r];
    table.total_nodes += inst.num_nodes;
  }
  return table;
}

nlohmann::json EfTable::to_json(const RelationVocab& vocab) const {
  nlohmann::json ef_map = nlohmann::json::object();
  for (RelationId r = 0; r < ef.size(); ++r) ef_map[vocab.name(r)] = ef[r];
  return {{"total_nodes", total_nodes}, {"ef", ef_map}};
}

EfTable EfTable::from_json(const nlohmann::json& j, const RelationVocab& vocab) {
  EfTable table;
  try {
    table.total_nodes = j.at("total_nodes").get<std::uint64_t>();
    table.ef.assign(vocab.size(), 0);
    for (const auto& [name, count] : j.at("ef").items()) {
      const auto r = vocab.find(name);
      if (!r) throw DataError("EF table names unknown relation '" + name + "'");
      table.ef[*r] = count.get<std::uint64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed EF table: ") + e.what());
  }
  return table;
}

IefVector inverse_entity_frequency(const EfTable& table) {
  return inverse_entity_frequency(table, table.total_nodes);
}

IefVector inverse_entity_frequency(const EfTable& table, std::uint64_t numerator) {
  if (numerator < 1) throw ContractError("IEF numerator must be at least 1");
  IefVector out;
  out.ief.reserve(table.ef.size());
  for (auto ef : table.ef)
    out.ief.push_back(std::log(static_cast<Real>(numerator) / (1.0 + static_cast<Real>(ef))));
  return out;
}

Tensor rfief_matrix(const RFMatrix& rf, const IefVector& ief) {
  if (ief.ief.size() != rf.num_relations) {
    throw DimensionError("IEF vector of length " + std::to_string(ief.ief.size()) +
                         " for RF with " + std::to_string(rf.num_relations) + " relations");
  }
  std::vector<Real> f(rf.counts.size());
  for (NodeId v = 0; v < rf.num_nodes; ++v)
    for (RelationId r = 0; r < rf.num_relations; ++r)
      f[v * rf.num_relations + r] = static_cast<Real>(rf.at(v, r)) * ief.ief[r];
  return Tensor::from({rf.num_nodes, rf.num_relations}, std::move(f));
}

Tensor mean_relation_matrix(const RFMatrix& rf) {
  std::vector<Real> f(rf.counts.size(), 0.0);
  for (NodeId v = 0; v < rf.num_nodes; ++v) {
    Real degree = 0.0;
    for (RelationId r = 0; r < rf.num_relations; ++r) degree += rf.at(v, r);
    if (degree == 0.0) continue;
    for (RelationId r = 0; r < rf.num_relations; ++r)
      f[v * rf.num_relations + r] = rf.at(v, r) / degree;
  }
  return Tensor::from({rf.num_nodes, rf.num_relations}, std::move(f));
}

Tensor rfief_embed(const RFMatrix& rf, const IefVector& ief, const Tensor& relations,
                   const Tensor& projection) {
  return matmul(matmul(rfief_matrix(rf, ief), relations), projection);
}

WeightReport inspect_weights(const RFMatrix& rf, const IefVector& ief, NodeId v) {
  if (v >= rf.num_nodes) throw ValidationError("node " + std::to_string(v) + " out of range");
  WeightReport report;
  Real positive_total = 0.0;
  for (RelationId r = 0; r < rf.num_relations; ++r) {
    const auto count = rf.at(v, r);
    if (count == 0) continue;
    const Real w = count * ief.ief.at(r);
    if (w > 0.0) {
      report.weights.emplace_back(r, w);
      positive_total += w;
    } else {
      report.suppressed.emplace_back(r, w);
    }
  }
  for (auto& [r, w] : report.weights) w /= positive_total;
  auto by_weight = [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  };
  std::sort(report.weights.begin(), report.weights.end(), by_weight);
  std::sort(report.suppressed.begin(), report.suppressed.end(), by_weight);
  return report;
}

}  // namespace nutrea
