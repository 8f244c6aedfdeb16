#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nutrea/data.hpp"
#include "nutrea/encoder.hpp"
#include "nutrea/graph.hpp"
#include "nutrea/rfief.hpp"
#include "nutrea/tensor.hpp"

namespace nutrea {

struct ModelConfig {
  std::size_t dim = 32;
  std::size_t layers = 2;
  std::size_t subtree_depth = 1;
  std::size_t num_expansion = 3;
  std::size_t num_backup = 3;
  double lambda = 1.0;
  bool position_embeddings = false;
  bool backup = true;
  bool rfief = true;
  bool inverse_edges = true;
  std::size_t inference_iterations = 2;
  IefNumerator ief_numerator = IefNumerator::corpus;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Two-layer perceptron: relu(x · w1 + b1) · w2 + b2.
struct MlpParams {
  Tensor w1, b1, w2, b2;
};

Tensor apply_mlp(const MlpParams& mlp, const Tensor& x);

struct LayerParams {
  Tensor expansion_proj;   // W_f [D×D]
  Tensor position;         // e_r [|R|×D], only with position embeddings
  MlpParams expansion_mlp; // (N+1)D -> D
  Tensor backup_proj;      // W_c [D×D]
  MlpParams backup_mlp;    // (M+1)D -> D
  Tensor expansion_score;  // W_e [D×1]
  Tensor backup_score;     // W_b [D×1]
};

struct ModelParams {
  TokenEmbedder embedder;
  IGParams expansion_ig;
  IGParams backup_ig;
  Tensor node_proj;        // W_h [D×D]
  Tensor expansion_reseed; // [D×D], projects the pass summary into q(0)
  Tensor backup_reseed;
  std::vector<LayerParams> layers;

  /// Every trainable tensor under a stable name, in a fixed order.
  std::vector<std::pair<std::string, Tensor>> named() const;
};

/// Uniform init in [-1/sqrt(D), 1/sqrt(D)] from a single seed.
ModelParams init_params(const ModelConfig& config, std::size_t vocab_size,
                        std::size_t relation_count, std::uint64_t seed);

/// Per-instance constants: augmented graph, node feature matrix and the
/// relation sets of every node's depth-K subtree.
struct PreparedGraph {
  AugmentedGraph graph;
  Tensor node_features;  // [|V|×|R|], RF·diag(IEF) or row-normalized RF
  std::vector<std::size_t> heads, relations, tails;
  std::vector<std::vector<std::size_t>> subtree_edge_sets;
  std::vector<std::vector<std::size_t>> subtree_relations;  // distinct, ascending
};

struct LayerState {
  Tensor scores;      // s [|V|]
  Tensor embeddings;  // h [|V|×D]
  Tensor expansion;   // f [|V|×D]
};

/// Score-weighted, instruction-conditioned messages along in-edges, then
/// f_v = MLP(h_v | f~_v).
Tensor expansion_step(const PreparedGraph& graph, const LayerState& state,
                      const std::vector<Tensor>& instructions, const LayerParams& params,
                      const Tensor& relation_emb, const ModelConfig& config);

/// Max-pooled subtree relation messages, then h_v = MLP(f_v | c_v). Returns f
/// unchanged when the backup step is disabled.
Tensor backup_step(const PreparedGraph& graph, const Tensor& expansion,
                   const std::vector<Tensor>& instructions, const LayerParams& params,
                   const Tensor& relation_emb, const ModelConfig& config);

/// softmax_v(f_v·W_e + λ h_v·W_b); the backup term is dropped when disabled.
Tensor node_ranking(const Tensor& expansion, const Tensor& embeddings, const LayerParams& params,
                    const ModelConfig& config);

LayerState nutrea_layer(const PreparedGraph& graph, const LayerState& state,
                        const InstructionSet& instructions, const LayerParams& params,
                        const Tensor& relation_emb, const ModelConfig& config);

struct ForwardResult {
  Tensor scores;                    // final [|V|]
  std::vector<Tensor> layer_scores; // every layer of every pass
};

/// The trainable model plus the vocabularies and EF table it was built with.
class Model {
 public:
  Model(ModelConfig config, RelationVocab relations, TokenVocab tokens, EfTable ef,
        std::uint64_t seed);
  Model(ModelConfig config, RelationVocab relations, TokenVocab tokens, EfTable ef,
        ModelParams params);

  const ModelConfig& config() const { return config_; }
  ModelConfig& mutable_config() { return config_; }
  const RelationVocab& relations() const { return relations_; }
  const TokenVocab& tokens() const { return tokens_; }
  const EfTable& ef_table() const { return ef_; }
  const ModelParams& params() const { return params_; }
  ModelParams& mutable_params() { return params_; }

  PreparedGraph prepare(const SubgraphInstance& instance) const;
  /// Relation embeddings R from the shared token embedder.
  Tensor relation_embeddings() const;
  Tensor initial_embeddings(const PreparedGraph& graph, const Tensor& relation_emb) const;
  ForwardResult forward(const PreparedGraph& graph) const;

  /// Rounds every parameter to 32-bit float precision (checkpoint precision).
  void quantize();
  /// Deep copy of the parameter values.
  Model clone() const;

 private:
  ModelConfig config_;
  RelationVocab relations_;
  TokenVocab tokens_;
  EfTable ef_;
  IefVector corpus_ief_;
  Tensor relation_tokens_;
  ModelParams params_;
};

}  // namespace nutrea
