#pragma once

// Relation Frequency - Inverse Entity Frequency node featurization.
//
//   RF(v, r)  = number of augmented edges of relation r incident to v
//   EF(r)     = number of nodes, summed over the training corpus, having at
//               least one incident edge of relation r
//   IEF(r)    = ln(total / (1 + EF(r)))
//   H         = RF · diag(IEF) · R · W_h

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nutrea/data.hpp"
#include "nutrea/graph.hpp"
#include "nutrea/tensor.hpp"

namespace nutrea {

/// Dense |V| × |R| incidence counts.
struct RFMatrix {
  std::size_t num_nodes = 0;
  std::size_t num_relations = 0;
  std::vector<std::uint32_t> counts;

  std::uint32_t at(NodeId v, RelationId r) const { return counts[v * num_relations + r]; }
};

RFMatrix relation_frequency(const AugmentedGraph& graph);

struct EfTable {
  std::vector<std::uint64_t> ef;  // indexed by augmented relation id
  std::uint64_t total_nodes = 0;

  nlohmann::json to_json(const RelationVocab& vocab) const;
  static EfTable from_json(const nlohmann::json& j, const RelationVocab& vocab);

  friend bool operator==(const EfTable&, const EfTable&) = default;
};

EfTable entity_frequency(const Dataset& train, bool inverse_edges = true);

enum class IefNumerator { corpus, instance };

struct IefVector {
  std::vector<Real> ief;
};

IefVector inverse_entity_frequency(const EfTable& table);
/// Same as above with an explicit numerator (the per-instance node count when
/// the instance variant is configured).
IefVector inverse_entity_frequency(const EfTable& table, std::uint64_t numerator);

/// RF · diag(IEF) as a constant [|V|×|R|] tensor.
Tensor rfief_matrix(const RFMatrix& rf, const IefVector& ief);
/// Row-normalized RF: each node's incident relations averaged.
Tensor mean_relation_matrix(const RFMatrix& rf);

/// H = RF · diag(IEF) · R · W_h; differentiable in R and W_h.
Tensor rfief_embed(const RFMatrix& rf, const IefVector& ief, const Tensor& relations,
                   const Tensor& projection);

struct WeightReport {
  /// Relations with positive weight, normalized to sum 1, sorted descending.
  std::vector<std::pair<RelationId, Real>> weights;
  /// Relations with non-positive RF-IEF weight, raw values, sorted descending.
  std::vector<std::pair<RelationId, Real>> suppressed;
};

/// Row v of RF · diag(IEF) presented as aggregation weights.
WeightReport inspect_weights(const RFMatrix& rf, const IefVector& ief, NodeId v);

}  // namespace nutrea
