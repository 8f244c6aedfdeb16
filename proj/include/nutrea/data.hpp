#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "nutrea/graph.hpp"

namespace nutrea {

/// Token vocabulary. Id 0 is reserved for unknown tokens.
class TokenVocab {
 public:
  static constexpr TokenId unk = 0;
  static constexpr const char* unk_token = "<unk>";
  static constexpr const char* self_loop_token = "<self_loop>";
  static constexpr const char* inverse_token = "inv";
  static constexpr const char* constraint_token = "with";

  TokenVocab();
  explicit TokenVocab(const std::vector<std::string>& tokens);

  /// Reserved tokens, relation-name pieces, then `extra` tokens; first
  /// occurrence wins.
  static TokenVocab build(const RelationVocab& relations,
                          const std::vector<std::string>& extra = {});

  TokenId add(const std::string& token);
  TokenId lookup(const std::string& token) const;
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  friend bool operator==(const TokenVocab& a, const TokenVocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Splits a relation surface name on whitespace and underscores.
std::vector<std::string> relation_name_pieces(const std::string& name);
std::vector<std::string> split_whitespace(const std::string& text);

struct Dataset {
  std::vector<SubgraphInstance> instances;
  RelationVocab relation_vocab;
  TokenVocab token_vocab;
  std::string split;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct LoadReport {
  std::size_t duplicates_dropped = 0;
  std::size_t empty_rejected = 0;
};

/// Reads a JSON-lines dataset. relations.txt (required) and vocab.txt
/// (optional) are read from the same directory.
Dataset load_dataset(const std::filesystem::path& path, LoadReport* report = nullptr);
/// Writes the JSON-lines file plus relations.txt and vocab.txt beside it.
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);

std::vector<std::string> read_lines(const std::filesystem::path& path);

enum class Direction { outgoing, incoming };

struct Constraint {
  RelationId relation = 0;  // base relation id
  Direction direction = Direction::outgoing;
};

struct PathQuerySpec {
  NodeId start = 0;
  std::vector<RelationId> relation_path;  // base relation ids, 1..4 hops
  std::optional<Constraint> constraint;
};

/// Executes the query exhaustively over the base triplets.
std::vector<NodeId> oracle_answer(const SubgraphInstance& instance, const PathQuerySpec& spec);

struct SyntheticConfig {
  std::size_t num_instances = 100;
  std::size_t nodes_per_graph = 30;
  std::size_t num_relations = 12;
  double edge_factor = 2.0;
  std::size_t hops = 2;
  double constraint_fraction = 0.0;
  double unanswerable_fraction = 0.0;
  std::uint64_t seed = 0;
  std::string id_prefix = "q";
};

struct SyntheticDataset {
  Dataset dataset;
  std::vector<PathQuerySpec> specs;  // parallel to dataset.instances
  std::size_t skipped = 0;
};

SyntheticDataset generate_synthetic(const SyntheticConfig& config);
std::vector<std::string> synthetic_relation_names(std::size_t count);

/// Keeps floor(keep_fraction * |triplets|) base triplets per instance,
/// sampled uniformly without replacement. Seeds, answers and questions are
/// untouched.
Dataset corrupt_kg(const Dataset& dataset, double keep_fraction, std::uint64_t seed);

}  // namespace nutrea
