#include "nutrea/model.hpp"

#include <cmath>
#include <random>
#include <set>

#include "nutrea/error.hpp"

namespace nutrea {

// --- config ---------------------------------------------------------------

void ModelConfig::validate() const {
  if (dim == 0) throw ValidationError("dim must be positive");
  if (layers < 1) throw ValidationError("layers must be at least 1");
  if (num_expansion < 1 || num_backup < 1) throw ValidationError("instruction counts must be at least 1");
  if (!(lambda >= 0.0)) throw ValidationError("lambda must be non-negative");
  if (inference_iterations < 1) throw ValidationError("inference_iterations must be at least 1");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"dim", dim},
          {"layers", layers},
          {"subtree_depth", subtree_depth},
          {"num_expansion", num_expansion},
          {"num_backup", num_backup},
          {"lambda", lambda},
          {"position_embeddings", position_embeddings},
          {"backup", backup},
          {"rfief", rfief},
          {"inverse_edges", inverse_edges},
          {"inference_iterations", inference_iterations},
          {"ief_numerator", ief_numerator == IefNumerator::corpus ? "corpus" : "instance"}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.dim = j.at("dim");
    c.layers = j.at("layers");
    c.subtree_depth = j.at("subtree_depth");
    c.num_expansion = j.at("num_expansion");
    c.num_backup = j.at("num_backup");
    c.lambda = j.at("lambda");
    c.position_embeddings = j.at("position_embeddings");
    c.backup = j.at("backup");
    c.rfief = j.at("rfief");
    c.inverse_edges = j.at("inverse_edges");
    c.inference_iterations = j.at("inference_iterations");
    const std::string numerator = j.at("ief_numerator");
    if (numerator != "corpus" && numerator != "instance")
      throw DataError("unknown ief_numerator '" + numerator + "'");
    c.ief_numerator = numerator == "corpus" ? IefNumerator::corpus : IefNumerator::instance;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

// --- parameters -----------------------------------------------------------

Tensor apply_mlp(const MlpParams& mlp, const Tensor& x) {
  const Tensor hidden = relu(add_rowwise(matmul(x, mlp.w1), mlp.b1));
  return add_rowwise(matmul(hidden, mlp.w2), mlp.b2);
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embedder.table", embedder.table);
  auto add_ig = [&](const std::string& prefix, const IGParams& ig) {
    for (std::size_t i = 0; i < ig.steps.size(); ++i)
      out.emplace_back(prefix + ".step" + std::to_string(i), ig.steps[i]);
    out.emplace_back(prefix + ".attention", ig.attention);
  };
  add_ig("ig_expansion", expansion_ig);
  add_ig("ig_backup", backup_ig);
  out.emplace_back("node_proj", node_proj);
  out.emplace_back("expansion_reseed", expansion_reseed);
  out.emplace_back("backup_reseed", backup_reseed);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto p = "layer" + std::to_string(l) + ".";
    const auto& lp = layers[l];
    out.emplace_back(p + "expansion_proj", lp.expansion_proj);
    if (lp.position.defined()) out.emplace_back(p + "position", lp.position);
    auto add_mlp = [&](const std::string& name, const MlpParams& m) {
      out.emplace_back(p + name + ".w1", m.w1);
      out.emplace_back(p + name + ".b1", m.b1);
      out.emplace_back(p + name + ".w2", m.w2);
      out.emplace_back(p + name + ".b2", m.b2);
    };
    add_mlp("expansion_mlp", lp.expansion_mlp);
    out.emplace_back(p + "backup_proj", lp.backup_proj);
    add_mlp("backup_mlp", lp.backup_mlp);
    out.emplace_back(p + "expansion_score", lp.expansion_score);
    out.emplace_back(p + "backup_score", lp.backup_score);
  }
  return out;
}

ModelParams init_params(const ModelConfig& config, std::size_t vocab_size,
                        std::size_t relation_count, std::uint64_t seed) {
  config.validate();
  const auto d = config.dim;
  const Real bound = 1.0 / std::sqrt(static_cast<Real>(d));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> uniform(-bound, bound);
  auto make = [&](Shape shape) {
    std::vector<Real> v(shape_size(shape));
    for (auto& x : v) x = uniform(rng);
    return Tensor::parameter(std::move(shape), std::move(v));
  };
  auto make_ig = [&](std::size_t count) {
    IGParams ig;
    for (std::size_t i = 0; i < count; ++i) ig.steps.push_back(make({4 * d, d}));
    ig.attention = make({d, d});
    return ig;
  };
  auto make_mlp = [&](std::size_t in) {
    return MlpParams{make({in, d}), make({d}), make({d, d}), make({d})};
  };

  ModelParams p;
  p.embedder.table = make({vocab_size, d});
  p.expansion_ig = make_ig(config.num_expansion);
  p.backup_ig = make_ig(config.num_backup);
  p.node_proj = make({d, d});
  p.expansion_reseed = make({d, d});
  p.backup_reseed = make({d, d});
  for (std::size_t l = 0; l < config.layers; ++l) {
    LayerParams lp;
    lp.expansion_proj = make({d, d});
    if (config.position_embeddings) lp.position = make({relation_count, d});
    lp.expansion_mlp = make_mlp((config.num_expansion + 1) * d);
    lp.backup_proj = make({d, d});
    lp.backup_mlp = make_mlp((config.num_backup + 1) * d);
    lp.expansion_score = make({d, 1});
    lp.backup_score = make({d, 1});
    p.layers.push_back(std::move(lp));
  }
  return p;
}

// --- layer steps ----------------------------------------------------------

Tensor expansion_step(const PreparedGraph& graph, const LayerState& state,
                      const std::vector<Tensor>& instructions, const LayerParams& params,
                      const Tensor& relation_emb, const ModelConfig& config) {
  const auto n = graph.graph.num_nodes();
  const auto r = relation_emb.dim(0);
  if (state.scores.size() != n) {
    throw DimensionError("score vector of length " + std::to_string(state.scores.size()) +
                         " for a graph with " + std::to_string(n) + " nodes");
  }
  Tensor edge_base = matmul(relation_emb, params.expansion_proj);
  if (config.position_embeddings) edge_base = add(edge_base, params.position);
  // incidence[v][r] = Σ s_u over edges (u, r, v); zero-score heads drop out
  const Tensor incidence =
      scatter_edge_weights(state.scores, graph.heads, graph.relations, graph.tails, n, r);
  std::vector<Tensor> parts{state.embeddings};
  for (const auto& q : instructions) {
    const Tensor messages = relu(mul_rowwise(edge_base, q));
    parts.push_back(matmul(incidence, messages));
  }
  return apply_mlp(params.expansion_mlp, concat(parts, 1));
}

Tensor backup_step(const PreparedGraph& graph, const Tensor& expansion,
                   const std::vector<Tensor>& instructions, const LayerParams& params,
                   const Tensor& relation_emb, const ModelConfig& config) {
  if (!config.backup) return expansion;
  const Tensor edge_base = matmul(relation_emb, params.backup_proj);
  std::vector<Tensor> parts{expansion};
  for (const auto& q : instructions) {
    const Tensor messages = relu(mul_rowwise(edge_base, q));
    // max over a subtree's edges equals max over its distinct relations
    parts.push_back(gather_maxpool(messages, graph.subtree_relations));
  }
  return apply_mlp(params.backup_mlp, concat(parts, 1));
}

Tensor node_ranking(const Tensor& expansion, const Tensor& embeddings, const LayerParams& params,
                    const ModelConfig& config) {
  const auto n = expansion.dim(0);
  Tensor logits = reshape(matmul(expansion, params.expansion_score), {n});
  if (config.backup) {
    const Tensor backup = reshape(matmul(embeddings, params.backup_score), {n});
    logits = add(logits, scale(backup, config.lambda));
  }
  return softmax(logits);
}

LayerState nutrea_layer(const PreparedGraph& graph, const LayerState& state,
                        const InstructionSet& instructions, const LayerParams& params,
                        const Tensor& relation_emb, const ModelConfig& config) {
  LayerState next;
  next.expansion =
      expansion_step(graph, state, instructions.expansion.vectors, params, relation_emb, config);
  next.embeddings =
      backup_step(graph, next.expansion, instructions.backup.vectors, params, relation_emb, config);
  next.scores = node_ranking(next.expansion, next.embeddings, params, config);
  return next;
}

// --- model ----------------------------------------------------------------

Model::Model(ModelConfig config, RelationVocab relations, TokenVocab tokens, EfTable ef,
             std::uint64_t seed)
    : Model(config, relations, tokens, ef, init_params(config, tokens.size(), relations.size(), seed)) {}

Model::Model(ModelConfig config, RelationVocab relations, TokenVocab tokens, EfTable ef,
             ModelParams params)
    : config_(std::move(config)),
      relations_(std::move(relations)),
      tokens_(std::move(tokens)),
      ef_(std::move(ef)),
      params_(std::move(params)) {
  config_.validate();
  if (ef_.ef.size() != relations_.size()) {
    throw DimensionError("EF table covers " + std::to_string(ef_.ef.size()) +
                         " relations, vocabulary has " + std::to_string(relations_.size()));
  }
  if (ef_.total_nodes >= 1) corpus_ief_ = inverse_entity_frequency(ef_);
  relation_tokens_ = relation_token_matrix(relations_, tokens_);
}

PreparedGraph Model::prepare(const SubgraphInstance& instance) const {
  PreparedGraph p{AugmentedGraph(instance, relations_, config_.inverse_edges), {}, {}, {}, {}, {}, {}};
  const auto rf = relation_frequency(p.graph);
  if (config_.rfief) {
    if (config_.ief_numerator == IefNumerator::instance) {
      p.node_features = rfief_matrix(rf, inverse_entity_frequency(ef_, instance.num_nodes));
    } else {
      if (corpus_ief_.ief.empty()) throw ContractError("RF-IEF needs a precomputed EF table");
      p.node_features = rfief_matrix(rf, corpus_ief_);
    }
  } else {
    p.node_features = mean_relation_matrix(rf);
  }
  for (const auto& e : p.graph.edges()) {
    p.heads.push_back(e.head);
    p.relations.push_back(e.relation);
    p.tails.push_back(e.tail);
  }
  p.subtree_edge_sets = all_subtree_edges(p.graph, config_.subtree_depth);
  for (const auto& set : p.subtree_edge_sets) {
    std::set<std::size_t> rels;
    for (auto e : set) rels.insert(p.graph.edges()[e].relation);
    p.subtree_relations.emplace_back(rels.begin(), rels.end());
  }
  return p;
}

Tensor Model::relation_embeddings() const {
  return encode_relations(relation_tokens_, params_.embedder);
}

Tensor Model::initial_embeddings(const PreparedGraph& graph, const Tensor& relation_emb) const {
  return matmul(matmul(graph.node_features, relation_emb), params_.node_proj);
}

ForwardResult Model::forward(const PreparedGraph& graph) const {
  const auto& inst = graph.graph.base();
  if (inst.seeds.empty()) throw ValidationError("instance '" + inst.id + "' has no seeds");
  const auto n = inst.num_nodes;
  const Tensor relation_emb = relation_embeddings();
  const QuestionEncoding question = encode_question(inst.question_tokens, params_.embedder);
  const Tensor h0 = initial_embeddings(graph, relation_emb);
  std::vector<Real> seed_scores(n, 0.0);
  for (auto s : inst.seeds) seed_scores[s] = 1.0;
  const Tensor s0 = Tensor::from({n}, std::move(seed_scores));

  ForwardResult result;
  Tensor exp_init, bak_init;
  LayerState state;
  for (std::size_t pass = 0; pass < config_.inference_iterations; ++pass) {
    if (pass > 0) {
      // condition the next pass on the previous pass's score-weighted summary
      const Tensor summary = matmul(reshape(state.scores, {1, n}), state.embeddings);
      exp_init = matmul(summary, params_.expansion_reseed);
      bak_init = matmul(summary, params_.backup_reseed);
    }
    const InstructionSet instructions =
        make_instruction_set(question, params_.expansion_ig, params_.backup_ig,
                             config_.num_expansion, config_.num_backup, exp_init, bak_init);
    state = LayerState{s0, h0, {}};
    for (const auto& layer : params_.layers) {
      state = nutrea_layer(graph, state, instructions, layer, relation_emb, config_);
      result.layer_scores.push_back(state.scores);
    }
  }
  result.scores = state.scores;
  return result;
}

void Model::quantize() {
  for (auto& [name, t] : params_.named()) {
    Tensor handle = t;
    for (auto& v : handle.mutable_values()) v = static_cast<Real>(static_cast<float>(v));
  }
}

Model Model::clone() const {
  Model copy = *this;
  // rebuild parameter tensors so the copy does not alias this model
  ModelParams& p = copy.params_;
  auto fresh = [](const Tensor& t) {
    return Tensor::parameter(t.shape(), std::vector<Real>(t.values().begin(), t.values().end()));
  };
  p.embedder.table = fresh(params_.embedder.table);
  for (auto* ig : {&p.expansion_ig, &p.backup_ig}) {
    for (auto& s : ig->steps) s = fresh(s);
    ig->attention = fresh(ig->attention);
  }
  p.node_proj = fresh(p.node_proj);
  p.expansion_reseed = fresh(p.expansion_reseed);
  p.backup_reseed = fresh(p.backup_reseed);
  for (auto& lp : p.layers) {
    lp.expansion_proj = fresh(lp.expansion_proj);
    if (lp.position.defined()) lp.position = fresh(lp.position);
    for (auto* m : {&lp.expansion_mlp, &lp.backup_mlp}) {
      m->w1 = fresh(m->w1);
      m->b1 = fresh(m->b1);
      m->w2 = fresh(m->w2);
      m->b2 = fresh(m->b2);
    }
    lp.backup_proj = fresh(lp.backup_proj);
    lp.expansion_score = fresh(lp.expansion_score);
    lp.backup_score = fresh(lp.backup_score);
  }
  return copy;
}

}  // namespace nutrea
