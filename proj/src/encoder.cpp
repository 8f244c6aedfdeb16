#include "nutrea/encoder.hpp"

#include "nutrea/error.hpp"

namespace nutrea {

QuestionEncoding encode_question(const std::vector<TokenId>& tokens, const TokenEmbedder& embedder) {
  if (tokens.empty()) throw ContractError("cannot encode an empty question");
  QuestionEncoding q;
  q.tokens = gather_rows(embedder.table, tokens);
  q.sentence = mean_rows(q.tokens);
  return q;
}

Instructions generate_instructions(const QuestionEncoding& question, const IGParams& params,
                                   std::size_t count, const Tensor& initial) {
  if (count == 0) throw ContractError("instruction count must be at least 1");
  if (params.steps.size() < count) {
    throw DimensionError("instruction generator has " + std::to_string(params.steps.size()) +
                         " step matrices, need " + std::to_string(count));
  }
  const auto d = question.sentence.dim(1);
  const Tensor& q_lm = question.sentence;
  Tensor prev = initial.defined() ? initial : Tensor::zeros({1, d});
  if (prev.shape() != q_lm.shape()) {
    throw DimensionError("initial instruction state " + shape_string(prev.shape()) +
                         " does not match " + shape_string(q_lm.shape()));
  }
  Instructions out;
  for (std::size_t i = 0; i < count; ++i) {
    const Tensor features = concat({prev, q_lm, sub(q_lm, prev), mul(q_lm, prev)}, 1);
    const Tensor q = matmul(features, params.steps[i]);
    const Tensor scores = sum_cols(matmul(mul_rowwise(question.tokens, q), params.attention));
    const Tensor weights = softmax(scores);
    out.vectors.push_back(matmul(reshape(weights, {1, weights.size()}), question.tokens));
    out.attention.push_back(weights);
    prev = q;
  }
  return out;
}

InstructionSet make_instruction_set(const QuestionEncoding& question, const IGParams& expansion,
                                    const IGParams& backup, std::size_t n, std::size_t m,
                                    const Tensor& expansion_initial, const Tensor& backup_initial) {
  return {generate_instructions(question, expansion, n, expansion_initial),
          generate_instructions(question, backup, m, backup_initial)};
}

Tensor relation_token_matrix(const RelationVocab& relations, const TokenVocab& tokens) {
  const auto rows = relations.size(), cols = tokens.size();
  std::vector<Real> m(rows * cols, 0.0);
  auto fill = [&](RelationId r, const std::vector<TokenId>& ids) {
    for (auto id : ids) m[r * cols + id] += 1.0 / static_cast<Real>(ids.size());
  };
  for (RelationId r = 0; r < relations.base_count(); ++r) {
    std::vector<TokenId> ids;
    for (const auto& piece : relation_name_pieces(relations.base_names()[r]))
      ids.push_back(tokens.lookup(piece));
    if (ids.empty()) ids.push_back(TokenVocab::unk);
    fill(r, ids);
    ids.insert(ids.begin(), tokens.lookup(TokenVocab::inverse_token));
    fill(relations.inverse(r), ids);
  }
  fill(relations.self_loop(), {tokens.lookup(TokenVocab::self_loop_token)});
  return Tensor::from({rows, cols}, std::move(m));
}

Tensor encode_relations(const RelationVocab& relations, const TokenVocab& tokens,
                        const TokenEmbedder& embedder) {
  return encode_relations(relation_token_matrix(relations, tokens), embedder);
}

Tensor encode_relations(const Tensor& relation_tokens, const TokenEmbedder& embedder) {
  return matmul(relation_tokens, embedder.table);
}

}  // namespace nutrea
