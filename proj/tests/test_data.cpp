#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "helpers.hpp"
#include "nutrea/error.hpp"

using namespace nutrea;
using testing::TempDir;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

// Straightforward reimplementation used as a second opinion on the oracle.
std::set<NodeId> reference_answer(const SubgraphInstance& inst, const PathQuerySpec& spec) {
  std::vector<bool> frontier(inst.num_nodes, false);
  frontier[spec.start] = true;
  for (auto r : spec.relation_path) {
    std::vector<bool> next(inst.num_nodes, false);
    for (const auto& t : inst.triplets)
      if (t.relation == r && frontier[t.head]) next[t.tail] = true;
    frontier = next;
  }
  std::set<NodeId> out;
  for (NodeId v = 0; v < inst.num_nodes; ++v) {
    if (!frontier[v]) continue;
    bool keep = true;
    if (spec.constraint) {
      keep = false;
      for (const auto& t : inst.triplets) {
        if (t.relation != spec.constraint->relation) continue;
        if (spec.constraint->direction == Direction::outgoing ? t.head == v : t.tail == v) keep = true;
      }
    }
    if (keep) out.insert(v);
  }
  return out;
}

SubgraphInstance graph_of(std::size_t nodes, std::vector<Triplet> triplets) {
  SubgraphInstance inst;
  inst.id = "t";
  inst.num_nodes = nodes;
  inst.triplets = std::move(triplets);
  inst.seeds = {0};
  return inst;
}

}  // namespace

TEST_CASE("fixture loads with three instances") {
  LoadReport report;
  const auto ds = load_dataset(fs::path(NUTREA_FIXTURE_DIR) / "sample.jsonl", &report);
  REQUIRE(ds.instances.size() == 3);
  CHECK(ds.relation_vocab.base_count() == 3);
  CHECK(ds.instances[2].id == "film-3");
  CHECK(ds.instances[2].answers == std::vector<NodeId>{1});
  CHECK(ds.token_vocab.token(ds.instances[0].question_tokens[0]) == "directed");
  CHECK(report.duplicates_dropped == 0);
}

TEST_CASE("write then load round-trips") {
  TempDir tmp("roundtrip");
  SyntheticConfig cfg;
  cfg.num_instances = 20;
  cfg.constraint_fraction = 0.5;
  cfg.seed = 3;
  auto ds = generate_synthetic(cfg).dataset;
  ds.split = "train";
  write_dataset(ds, tmp.path / "train.jsonl");
  CHECK(load_dataset(tmp.path / "train.jsonl") == ds);
}

TEST_CASE("loader errors") {
  TempDir tmp("errors");
  write_text(tmp.path / "relations.txt", "a\nb\n");
  const std::string good =
      R"({"id": "ok", "question": "a", "entities": [0], "answers": [1], "num_nodes": 2, "subgraph": [[0, "a", 1]]})";

  SUBCASE("node id out of range names the instance") {
    write_text(tmp.path / "d.jsonl",
               R"({"id": "bad-node", "question": "a", "entities": [0], "answers": [1], "num_nodes": 2, "subgraph": [[0, "a", 2]]})");
    try {
      load_dataset(tmp.path / "d.jsonl");
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("bad-node") != std::string::npos);
    }
  }
  SUBCASE("malformed line reports its line number") {
    write_text(tmp.path / "d.jsonl", good + "\n{not json\n");
    try {
      load_dataset(tmp.path / "d.jsonl");
      FAIL("expected a data error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("d.jsonl:2") != std::string::npos);
    }
  }
  SUBCASE("unknown relation") {
    write_text(tmp.path / "d.jsonl",
               R"({"id": "x", "question": "a", "entities": [0], "answers": [1], "num_nodes": 2, "subgraph": [[0, "zzz", 1]]})");
    CHECK_THROWS_AS(load_dataset(tmp.path / "d.jsonl"), DataError);
  }
  SUBCASE("duplicates dropped and empty subgraphs rejected") {
    write_text(tmp.path / "d.jsonl",
               R"({"id": "dup", "question": "a", "entities": [0], "answers": [1], "num_nodes": 2, "subgraph": [[0, "a", 1], [0, "a", 1], [1, "b", 0]]})"
               "\n"
               R"({"id": "empty", "question": "a", "entities": [0], "answers": [], "num_nodes": 1, "subgraph": []})");
    LoadReport report;
    const auto ds = load_dataset(tmp.path / "d.jsonl", &report);
    REQUIRE(ds.instances.size() == 1);
    CHECK(ds.instances[0].triplets.size() == 2);
    CHECK(report.duplicates_dropped == 1);
    CHECK(report.empty_rejected == 1);
  }
  SUBCASE("missing files") {
    CHECK_THROWS_AS(load_dataset(tmp.path / "nope.jsonl"), IoError);
    fs::remove(tmp.path / "relations.txt");
    write_text(tmp.path / "d.jsonl", good);
    CHECK_THROWS_AS(load_dataset(tmp.path / "d.jsonl"), IoError);
  }
}

TEST_CASE("oracle hand examples") {
  CHECK(oracle_answer(graph_of(2, {{0, 0, 1}}), {0, {0}, std::nullopt}) == std::vector<NodeId>{1});

  const auto diamond = graph_of(4, {{0, 0, 1}, {0, 0, 2}, {1, 0, 3}, {2, 0, 3}});
  CHECK(oracle_answer(diamond, {0, {0, 0}, std::nullopt}) == std::vector<NodeId>{3});

  // neither 1 nor 2 has an outgoing relation-1 edge
  const auto fan = graph_of(3, {{0, 0, 1}, {0, 0, 2}});
  CHECK(oracle_answer(fan, {0, {0}, Constraint{1, Direction::outgoing}}).empty());

  // star with a unique relation per spoke
  const auto star = graph_of(5, {{0, 0, 1}, {0, 1, 2}, {0, 2, 3}, {0, 3, 4}});
  for (RelationId r = 0; r < 4; ++r)
    CHECK(oracle_answer(star, {0, {r}, std::nullopt}) == std::vector<NodeId>{r + 1});

  // direction of the constraint matters
  const auto dir = graph_of(4, {{0, 0, 1}, {0, 0, 2}, {1, 1, 3}, {3, 1, 2}});
  CHECK(oracle_answer(dir, {0, {0}, Constraint{1, Direction::outgoing}}) == std::vector<NodeId>{1});
  CHECK(oracle_answer(dir, {0, {0}, Constraint{1, Direction::incoming}}) == std::vector<NodeId>{2});
}

TEST_CASE("oracle agrees with a reference and ignores triplet order") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    auto inst = testing::random_instance(rng, 3 + rng() % 10, 1 + rng() % 25, 3);
    PathQuerySpec spec;
    spec.start = rng() % inst.num_nodes;
    for (std::size_t h = 0, hops = 1 + rng() % 3; h < hops; ++h) spec.relation_path.push_back(rng() % 3);
    if (rng() % 2) spec.constraint = Constraint{rng() % 3, rng() % 2 ? Direction::outgoing : Direction::incoming};
    const auto got = oracle_answer(inst, spec);
    const auto ref = reference_answer(inst, spec);
    CHECK(std::set<NodeId>(got.begin(), got.end()) == ref);
    std::shuffle(inst.triplets.begin(), inst.triplets.end(), rng);
    CHECK(oracle_answer(inst, spec) == got);
  }
}

TEST_CASE("synthetic generation") {
  SyntheticConfig cfg;
  cfg.num_instances = 150;
  cfg.constraint_fraction = 0.5;
  cfg.seed = 9;
  const auto a = generate_synthetic(cfg);
  const auto b = generate_synthetic(cfg);
  CHECK(a.dataset == b.dataset);

  const auto with = a.dataset.token_vocab.lookup(TokenVocab::constraint_token);
  std::size_t constrained = 0;
  for (std::size_t i = 0; i < a.dataset.instances.size(); ++i) {
    const auto& inst = a.dataset.instances[i];
    const auto& spec = a.specs[i];
    CHECK(oracle_answer(inst, spec) == inst.answers);
    CHECK(inst.seeds == std::vector<NodeId>{spec.start});
    CHECK(inst.question_tokens.size() == spec.relation_path.size() + (spec.constraint ? 2 : 0));
    CHECK(a.dataset.token_vocab.token(inst.question_tokens[0]) ==
          a.dataset.relation_vocab.name(spec.relation_path[0]));
    constrained += spec.constraint.has_value();
  }
  CHECK(constrained > 0);

  cfg.constraint_fraction = 0.0;
  const auto plain = generate_synthetic(cfg);
  for (const auto& inst : plain.dataset.instances)
    for (auto t : inst.question_tokens) CHECK(t != with);

  cfg.hops = 0;
  CHECK_THROWS_AS(generate_synthetic(cfg), ValidationError);
  cfg.hops = 2;
  cfg.num_relations = 1;
  CHECK_THROWS_AS(generate_synthetic(cfg), ValidationError);
}

TEST_CASE("corrupt_kg") {
  SyntheticConfig cfg;
  cfg.num_instances = 30;
  cfg.seed = 4;
  const auto ds = generate_synthetic(cfg).dataset;
  CHECK(corrupt_kg(ds, 1.0, 1) == ds);

  Dataset ten = ds;
  ten.instances.resize(1);
  ten.instances[0].triplets.resize(10);
  CHECK(corrupt_kg(ten, 0.5, 2).instances[0].triplets.size() == 5);

  const auto c1 = corrupt_kg(ds, 0.3, 7);
  CHECK(c1 == corrupt_kg(ds, 0.3, 7));
  for (std::size_t i = 0; i < ds.instances.size(); ++i) {
    const auto& before = ds.instances[i];
    const auto& after = c1.instances[i];
    const std::set<Triplet> original(before.triplets.begin(), before.triplets.end());
    for (const auto& t : after.triplets) CHECK(original.count(t) == 1);
    CHECK(after.triplets.size() == static_cast<std::size_t>(0.3 * before.triplets.size() + 1e-9));
    CHECK(after.seeds == before.seeds);
    CHECK(after.answers == before.answers);
    CHECK(after.question_tokens == before.question_tokens);
  }
  CHECK_THROWS_AS(corrupt_kg(ds, 0.0, 1), ContractError);
}
