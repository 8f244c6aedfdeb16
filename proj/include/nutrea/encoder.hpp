#pragma once

#include <vector>

#include "nutrea/data.hpp"
#include "nutrea/tensor.hpp"

namespace nutrea {

struct TokenEmbedder {
  Tensor table;  // [vocab_size × D]

  std::size_t vocab_size() const { return table.dim(0); }
  std::size_t dim() const { return table.dim(1); }
};

struct QuestionEncoding {
  Tensor tokens;    // x_t as rows, [T × D]
  Tensor sentence;  // q_LM, [1 × D]
};

/// Token rows plus their mean as the sentence embedding.
QuestionEncoding encode_question(const std::vector<TokenId>& tokens, const TokenEmbedder& embedder);

/// Parameters of one instruction generator: a [4D × D] projection per step
/// and a shared [D × D] attention matrix.
struct IGParams {
  std::vector<Tensor> steps;
  Tensor attention;
};

struct Instructions {
  std::vector<Tensor> vectors;    // [1 × D] each
  std::vector<Tensor> attention;  // [T] probability vector per instruction
};

/// Runs the instruction recurrence `count` times.
///
///   q(i)   = [q(i-1) | q_LM | q_LM - q(i-1) | q_LM ⊙ q(i-1)] · W(i)
///   a_t(i) = softmax over t of sum_d ((q(i) ⊙ x_t) · W_a)_d
///   inst(i) = Σ_t a_t(i) x_t
///
/// `initial` replaces the zero vector q(0) when defined.
Instructions generate_instructions(const QuestionEncoding& question, const IGParams& params,
                                   std::size_t count, const Tensor& initial = {});

struct InstructionSet {
  Instructions expansion;
  Instructions backup;
};

InstructionSet make_instruction_set(const QuestionEncoding& question, const IGParams& expansion,
                                    const IGParams& backup, std::size_t n, std::size_t m,
                                    const Tensor& expansion_initial = {},
                                    const Tensor& backup_initial = {});

/// Constant [|R| × vocab] matrix whose row r averages the one-hot vectors of
/// relation r's name tokens. Inverses prepend the "inv" token; the self-loop
/// uses its own reserved token.
Tensor relation_token_matrix(const RelationVocab& relations, const TokenVocab& tokens);

/// Relation embeddings R = relation_token_matrix · embedding table.
Tensor encode_relations(const RelationVocab& relations, const TokenVocab& tokens,
                        const TokenEmbedder& embedder);
Tensor encode_relations(const Tensor& relation_tokens, const TokenEmbedder& embedder);

}  // namespace nutrea
