#include "nutrea/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "nutrea/error.hpp"

namespace nutrea {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// --- vocabularies -----------------------------------------------------------

TokenVocab::TokenVocab() { add(unk_token); }

TokenVocab::TokenVocab(const std::vector<std::string>& tokens) {
  add(unk_token);
  for (const auto& t : tokens) add(t);
}

TokenVocab TokenVocab::build(const RelationVocab& relations, const std::vector<std::string>& extra) {
  TokenVocab vocab;
  vocab.add(self_loop_token);
  vocab.add(inverse_token);
  vocab.add(constraint_token);
  for (const auto& name : relations.base_names())
    for (const auto& piece : relation_name_pieces(name)) vocab.add(piece);
  for (const auto& t : extra) vocab.add(t);
  return vocab;
}

TokenId TokenVocab::add(const std::string& token) {
  auto [it, inserted] = index_.emplace(token, tokens_.size());
  if (inserted) tokens_.push_back(token);
  return it->second;
}

TokenId TokenVocab::lookup(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? unk : it->second;
}

std::vector<std::string> split_whitespace(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string word; in >> word;) out.push_back(word);
  return out;
}

std::vector<std::string> relation_name_pieces(const std::string& name) {
  std::string spaced = name;
  std::replace(spaced.begin(), spaced.end(), '_', ' ');
  return split_whitespace(spaced);
}

// --- file I/O ---------------------------------------------------------------

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

namespace {

std::vector<std::string> non_empty(std::vector<std::string> lines) {
  std::erase_if(lines, [](const std::string& l) {
    return l.find_first_not_of(" \t") == std::string::npos;
  });
  return lines;
}

std::size_t as_node(const json& value, const std::string& where) {
  if (!value.is_number_integer() || value.get<long long>() < 0) {
    throw DataError(where + ": expected a non-negative integer node id");
  }
  return value.get<std::size_t>();
}

}  // namespace

Dataset load_dataset(const fs::path& path, LoadReport* report) {
  if (!fs::exists(path)) throw IoError("dataset not found: " + path.string());
  const auto dir = path.parent_path();
  const auto relations_path = dir / "relations.txt";
  if (!fs::exists(relations_path)) throw IoError("missing " + relations_path.string());

  Dataset ds;
  ds.relation_vocab = RelationVocab(non_empty(read_lines(relations_path)));
  const auto vocab_path = dir / "vocab.txt";
  const bool have_vocab = fs::exists(vocab_path);
  if (have_vocab) {
    auto tokens = non_empty(read_lines(vocab_path));
    std::erase(tokens, std::string(TokenVocab::unk_token));
    ds.token_vocab = TokenVocab(tokens);
  } else {
    ds.token_vocab = TokenVocab::build(ds.relation_vocab);
  }
  ds.split = path.stem().string();

  LoadReport local;
  const auto lines = read_lines(path);
  for (std::size_t lineno = 1; lineno <= lines.size(); ++lineno) {
    const auto& line = lines[lineno - 1];
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(where + ": malformed JSON (" + e.what() + ")");
    }
    SubgraphInstance inst;
    try {
      inst.id = row.at("id").get<std::string>();
      for (const auto& word : split_whitespace(row.at("question").get<std::string>())) {
        inst.question_tokens.push_back(have_vocab ? ds.token_vocab.lookup(word)
                                                  : ds.token_vocab.add(word));
      }
      for (const auto& s : row.at("entities")) inst.seeds.push_back(as_node(s, where));
      for (const auto& a : row.at("answers")) inst.answers.push_back(as_node(a, where));
      inst.num_nodes = as_node(row.at("num_nodes"), where);
      std::set<Triplet> seen;
      for (const auto& t : row.at("subgraph")) {
        if (!t.is_array() || t.size() != 3) throw DataError(where + ": triplet must be [h, rel, t]");
        const auto rel_name = t[1].get<std::string>();
        const auto rel = ds.relation_vocab.find(rel_name);
        if (!rel || *rel >= ds.relation_vocab.base_count()) {
          throw DataError(where + ": unknown relation '" + rel_name + "'");
        }
        Triplet trip{as_node(t[0], where), *rel, as_node(t[2], where)};
        if (!seen.insert(trip).second) {
          ++local.duplicates_dropped;
          continue;
        }
        inst.triplets.push_back(trip);
      }
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    if (inst.triplets.empty()) {
      ++local.empty_rejected;
      continue;
    }
    inst.validate(ds.relation_vocab.base_count());
    ds.instances.push_back(std::move(inst));
  }
  if (report) *report = local;
  return ds;
}

void write_dataset(const Dataset& dataset, const fs::path& path) {
  const auto dir = path.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& inst : dataset.instances) {
    std::string question;
    for (auto tok : inst.question_tokens) {
      if (!question.empty()) question += ' ';
      question += dataset.token_vocab.token(tok);
    }
    json row;
    row["id"] = inst.id;
    row["question"] = question;
    row["entities"] = inst.seeds;
    row["answers"] = inst.answers;
    row["num_nodes"] = inst.num_nodes;
    json sub = json::array();
    for (const auto& t : inst.triplets)
      sub.push_back(json::array({t.head, dataset.relation_vocab.name(t.relation), t.tail}));
    row["subgraph"] = std::move(sub);
    out << row.dump() << '\n';
  }
  std::ofstream rel(dir / "relations.txt", std::ios::binary);
  for (const auto& n : dataset.relation_vocab.base_names()) rel << n << '\n';
  std::ofstream voc(dir / "vocab.txt", std::ios::binary);
  for (const auto& t : dataset.token_vocab.tokens()) voc << t << '\n';
  if (!out || !rel || !voc) throw IoError("failed writing dataset files in " + dir.string());
}

// --- query oracle -----------------------------------------------------------

std::vector<NodeId> oracle_answer(const SubgraphInstance& instance, const PathQuerySpec& spec) {
  std::set<NodeId> frontier{spec.start};
  for (auto r : spec.relation_path) {
    std::set<NodeId> next;
    for (const auto& t : instance.triplets)
      if (t.relation == r && frontier.count(t.head)) next.insert(t.tail);
    frontier = std::move(next);
  }
  if (spec.constraint) {
    const auto& c = *spec.constraint;
    std::set<NodeId> kept;
    for (auto v : frontier) {
      for (const auto& t : instance.triplets) {
        const NodeId end = c.direction == Direction::outgoing ? t.head : t.tail;
        if (t.relation == c.relation && end == v) {
          kept.insert(v);
          break;
        }
      }
    }
    frontier = std::move(kept);
  }
  return {frontier.begin(), frontier.end()};
}

// --- synthetic generation ---------------------------------------------------

std::vector<std::string> synthetic_relation_names(std::size_t count) {
  static const std::vector<std::string> words = {
      "directed", "starring", "written",  "genre",   "language", "released",
      "country",  "spouse",   "born",     "member",  "located",  "capital",
      "award",    "parent",   "founded",  "employer", "sibling", "school"};
  std::vector<std::string> names;
  for (std::size_t i = 0; i < count; ++i)
    names.push_back(i < words.size() ? words[i] : "rel" + std::to_string(i));
  return names;
}

namespace {

struct Candidate {
  SubgraphInstance instance;
  PathQuerySpec spec;
};

bool has_incident(const SubgraphInstance& inst, NodeId v, RelationId r, std::optional<Direction> dir) {
  for (const auto& t : inst.triplets) {
    if (t.relation != r) continue;
    if ((!dir || *dir == Direction::outgoing) && t.head == v) return true;
    if ((!dir || *dir == Direction::incoming) && t.tail == v) return true;
  }
  return false;
}

std::optional<Candidate> sample_candidate(const SyntheticConfig& cfg, std::mt19937_64& rng,
                                          bool constrained, bool unanswerable) {
  const auto n = cfg.nodes_per_graph;
  const auto target = static_cast<std::size_t>(std::llround(cfg.edge_factor * static_cast<double>(n)));
  std::uniform_int_distribution<std::size_t> node(0, n - 1);
  std::uniform_int_distribution<std::size_t> rel(0, cfg.num_relations - 1);

  Candidate c;
  c.instance.num_nodes = n;
  std::set<Triplet> seen;
  for (std::size_t tries = 0; c.instance.triplets.size() < target && tries < 20 * target + 100; ++tries) {
    Triplet t{node(rng), rel(rng), node(rng)};
    if (t.head == t.tail || !seen.insert(t).second) continue;
    c.instance.triplets.push_back(t);
  }

  // random walk along base edges realizes the path
  std::vector<std::vector<const Triplet*>> out(n);
  for (const auto& t : c.instance.triplets) out[t.head].push_back(&t);
  NodeId at = node(rng);
  c.spec.start = at;
  for (std::size_t h = 0; h < cfg.hops; ++h) {
    if (out[at].empty()) return std::nullopt;
    std::uniform_int_distribution<std::size_t> pick(0, out[at].size() - 1);
    const Triplet* step = out[at][pick(rng)];
    c.spec.relation_path.push_back(step->relation);
    at = step->tail;
  }
  auto answers = oracle_answer(c.instance, c.spec);
  if (answers.empty() || std::binary_search(answers.begin(), answers.end(), c.spec.start)) {
    return std::nullopt;
  }

  if (constrained) {
    // The question names the constraint relation but not its direction, so
    // only constraints whose directed and undirected filters agree are used.
    std::vector<Constraint> options;
    for (RelationId r = 0; r < cfg.num_relations; ++r) {
      for (auto dir : {Direction::outgoing, Direction::incoming}) {
        std::size_t kept = 0;
        bool agrees = true;
        for (auto v : answers) {
          const bool directed = has_incident(c.instance, v, r, dir);
          kept += directed;
          agrees = agrees && directed == has_incident(c.instance, v, r, std::nullopt);
        }
        if (agrees && kept > 0 && kept < answers.size()) options.push_back({r, dir});
      }
    }
    if (options.empty()) return std::nullopt;
    std::uniform_int_distribution<std::size_t> pick(0, options.size() - 1);
    c.spec.constraint = options[pick(rng)];
  }

  if (unanswerable) {
    // cut the last hop out of the penultimate frontier
    PathQuerySpec prefix = c.spec;
    prefix.constraint.reset();
    prefix.relation_path.pop_back();
    const auto before = oracle_answer(c.instance, prefix);
    const auto last = c.spec.relation_path.back();
    std::erase_if(c.instance.triplets, [&](const Triplet& t) {
      return t.relation == last && std::binary_search(before.begin(), before.end(), t.head);
    });
    if (c.instance.triplets.empty()) return std::nullopt;
  }

  c.instance.seeds = {c.spec.start};
  c.instance.answers = oracle_answer(c.instance, c.spec);
  return c;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.num_relations < 2) throw ValidationError("num_relations must be at least 2");
  if (cfg.hops < 1 || cfg.hops > 4) throw ValidationError("hops must be in [1, 4]");
  if (cfg.nodes_per_graph < cfg.hops + 1) throw ValidationError("nodes_per_graph must be >= hops + 1");
  if (cfg.constraint_fraction < 0 || cfg.constraint_fraction > 1 ||
      cfg.unanswerable_fraction < 0 || cfg.unanswerable_fraction > 1) {
    throw ValidationError("fractions must lie in [0, 1]");
  }

  SyntheticDataset out;
  auto& ds = out.dataset;
  ds.relation_vocab = RelationVocab(synthetic_relation_names(cfg.num_relations));
  ds.token_vocab = TokenVocab::build(ds.relation_vocab);
  ds.split = "synthetic";

  std::mt19937_64 rng(cfg.seed);
  std::bernoulli_distribution constrained(cfg.constraint_fraction);
  std::bernoulli_distribution unanswerable(cfg.unanswerable_fraction);
  for (std::size_t i = 0; i < cfg.num_instances; ++i) {
    const bool want_constraint = constrained(rng);
    const bool want_unanswerable = unanswerable(rng);
    std::optional<Candidate> found;
    for (int attempt = 0; attempt < 100 && !found; ++attempt)
      found = sample_candidate(cfg, rng, want_constraint, want_unanswerable);
    if (!found) {
      ++out.skipped;
      continue;
    }
    auto& inst = found->instance;
    inst.id = cfg.id_prefix + std::to_string(i);
    for (auto r : found->spec.relation_path)
      inst.question_tokens.push_back(ds.token_vocab.lookup(ds.relation_vocab.name(r)));
    if (found->spec.constraint) {
      inst.question_tokens.push_back(ds.token_vocab.lookup(TokenVocab::constraint_token));
      inst.question_tokens.push_back(
          ds.token_vocab.lookup(ds.relation_vocab.name(found->spec.constraint->relation)));
    }
    ds.instances.push_back(std::move(inst));
    out.specs.push_back(std::move(found->spec));
  }
  if (ds.instances.empty()) throw DataError("synthetic generation produced zero instances");
  return out;
}

Dataset corrupt_kg(const Dataset& dataset, double keep_fraction, std::uint64_t seed) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw ContractError("keep_fraction must lie in (0, 1]");
  }
  Dataset out = dataset;
  if (keep_fraction == 1.0) return out;
  std::mt19937_64 rng(seed);
  for (auto& inst : out.instances) {
    const auto total = inst.triplets.size();
    const auto keep = static_cast<std::size_t>(std::floor(keep_fraction * static_cast<double>(total) + 1e-9));
    std::vector<std::size_t> order(total);
    for (std::size_t i = 0; i < total; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(keep);
    std::sort(order.begin(), order.end());
    std::vector<Triplet> kept;
    kept.reserve(keep);
    for (auto i : order) kept.push_back(inst.triplets[i]);
    inst.triplets = std::move(kept);
  }
  return out;
}

}  // namespace nutrea
