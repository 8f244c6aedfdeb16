#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "nutrea/error.hpp"
#include "nutrea/rfief.hpp"

using namespace nutrea;

namespace {

// Incidence counted straight from the base triplets: a base edge and its
// inverse both touch head and tail; every node has one self-loop.
std::vector<std::vector<std::uint32_t>> brute_rf(const SubgraphInstance& inst, const RelationVocab& vocab) {
  std::vector<std::vector<std::uint32_t>> rf(inst.num_nodes, std::vector<std::uint32_t>(vocab.size(), 0));
  for (const auto& t : inst.triplets) {
    for (auto r : {t.relation, vocab.inverse(t.relation)}) {
      ++rf[t.head][r];
      ++rf[t.tail][r];
    }
  }
  for (NodeId v = 0; v < inst.num_nodes; ++v) ++rf[v][vocab.self_loop()];
  return rf;
}

Dataset dataset_of(std::vector<SubgraphInstance> instances, const RelationVocab& vocab) {
  Dataset ds;
  ds.relation_vocab = vocab;
  ds.token_vocab = TokenVocab::build(vocab);
  ds.instances = std::move(instances);
  return ds;
}

SubgraphInstance two_edges() {
  SubgraphInstance inst;
  inst.id = "two";
  inst.num_nodes = 3;
  inst.triplets = {{0, 0, 1}, {1, 1, 2}};
  inst.seeds = {0};
  return inst;
}

}  // namespace

TEST_CASE("relation_frequency hand examples") {
  const auto vocab = testing::relation_vocab(2);
  SubgraphInstance single;
  single.num_nodes = 1;
  single.seeds = {0};
  const auto rf1 = relation_frequency(AugmentedGraph(single, vocab));
  for (RelationId r = 0; r < vocab.size(); ++r) CHECK(rf1.at(0, r) == (r == vocab.self_loop() ? 1u : 0u));

  const auto rf = relation_frequency(AugmentedGraph(two_edges(), vocab));
  CHECK(rf.at(1, 0) == 1);
  CHECK(rf.at(1, vocab.inverse(0)) == 1);
  CHECK(rf.at(1, 1) == 1);
  CHECK(rf.at(1, vocab.inverse(1)) == 1);
  CHECK(rf.at(1, vocab.self_loop()) == 1);
  CHECK(rf.at(0, 1) == 0);
}

TEST_CASE("relation_frequency matches enumeration and degree") {
  std::mt19937_64 rng(31);
  const auto vocab = testing::relation_vocab(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = testing::random_instance(rng, 2 + rng() % 12, rng() % 30, 4);
    const AugmentedGraph g(inst, vocab);
    const auto rf = relation_frequency(g);
    const auto ref = brute_rf(inst, vocab);
    for (NodeId v = 0; v < inst.num_nodes; ++v) {
      std::uint32_t row = 0;
      for (RelationId r = 0; r < vocab.size(); ++r) {
        CHECK(rf.at(v, r) == ref[v][r]);
        row += rf.at(v, r);
      }
      std::uint32_t degree = 0;
      for (const auto& e : g.edges()) degree += (e.head == v) + (e.tail == v && e.head != v);
      CHECK(row == degree);
    }
  }
}

TEST_CASE("entity_frequency") {
  const auto vocab = testing::relation_vocab(3);
  const auto one = entity_frequency(dataset_of({two_edges()}, vocab));
  CHECK(one.ef[0] == 2);
  CHECK(one.ef[1] == 2);
  CHECK(one.ef[2] == 0);
  CHECK(one.ef[vocab.self_loop()] == 3);
  CHECK(one.total_nodes == 3);

  const auto twice = entity_frequency(dataset_of({two_edges(), two_edges()}, vocab));
  for (RelationId r = 0; r < vocab.size(); ++r) CHECK(twice.ef[r] == 2 * one.ef[r]);
  CHECK(twice.total_nodes == 6);

  const auto ief = inverse_entity_frequency(one);
  CHECK(ief.ief[2] == doctest::Approx(std::log(3.0)).epsilon(1e-15));
  CHECK(ief.ief[0] == 0.0);
  CHECK(ief.ief[vocab.self_loop()] < 0.0);

  CHECK_THROWS_AS(entity_frequency(dataset_of({}, vocab)), ContractError);
  CHECK(EfTable::from_json(one.to_json(vocab), vocab) == one);
}

TEST_CASE("entity_frequency is additive over concatenation") {
  std::mt19937_64 rng(32);
  const auto vocab = testing::relation_vocab(3);
  std::vector<SubgraphInstance> a, b;
  for (int i = 0; i < 10; ++i) a.push_back(testing::random_instance(rng, 2 + rng() % 8, rng() % 15, 3));
  for (int i = 0; i < 7; ++i) b.push_back(testing::random_instance(rng, 2 + rng() % 8, rng() % 15, 3));
  auto ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  const auto ea = entity_frequency(dataset_of(a, vocab));
  const auto eb = entity_frequency(dataset_of(b, vocab));
  const auto eab = entity_frequency(dataset_of(ab, vocab));
  for (RelationId r = 0; r < vocab.size(); ++r) CHECK(eab.ef[r] == ea.ef[r] + eb.ef[r]);
  CHECK(eab.total_nodes == ea.total_nodes + eb.total_nodes);
}

TEST_CASE("inverse_entity_frequency") {
  EfTable t;
  t.total_nodes = 20;
  for (std::uint64_t ef = 0; ef <= 20; ++ef) t.ef.push_back(ef);
  const auto ief = inverse_entity_frequency(t);
  for (std::size_t i = 0; i < t.ef.size(); ++i) {
    CHECK(ief.ief[i] == doctest::Approx(std::log(20.0 / (1.0 + i))).epsilon(1e-15));
    if (i > 0) CHECK(ief.ief[i] < ief.ief[i - 1]);
  }
  // scaling counts changes the values; check the recomputed numbers exactly
  EfTable scaled = t;
  scaled.total_nodes *= 3;
  for (auto& e : scaled.ef) e *= 3;
  const auto ief3 = inverse_entity_frequency(scaled);
  for (std::size_t i = 0; i < t.ef.size(); ++i)
    CHECK(ief3.ief[i] == doctest::Approx(std::log(60.0 / (1.0 + 3.0 * i))).epsilon(1e-15));

  CHECK(inverse_entity_frequency(t, 5).ief[0] == doctest::Approx(std::log(5.0)));
  CHECK_THROWS_AS(inverse_entity_frequency(EfTable{{1}, 0}), ContractError);
}

TEST_CASE("rfief_embed") {
  RFMatrix rf{1, 1, {1}};
  const IefVector ief{{std::log(2.0)}};
  const auto h = rfief_embed(rf, ief, Tensor::from({1, 2}, {1, 0}), Tensor::from({2, 2}, {1, 0, 0, 1}));
  CHECK(h.at(0, 0) == doctest::Approx(std::log(2.0)));
  CHECK(h.at(0, 1) == 0.0);

  RFMatrix zero{3, 2, std::vector<std::uint32_t>(6, 0)};
  std::mt19937_64 rng(33);
  const auto r = testing::random_tensor({2, 4}, rng);
  const auto w = testing::random_tensor({4, 4}, rng);
  const auto h0 = rfief_embed(zero, {{1.0, 2.0}}, r, w);
  for (auto v : h0.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(rfief_embed(zero, {{1.0}}, r, w), DimensionError);

  // brute-force triple loop
  const auto vocab = testing::relation_vocab(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto inst = testing::random_instance(rng, 8, 12, 3);
    const auto rfm = relation_frequency(AugmentedGraph(inst, vocab));
    EfTable t;
    t.total_nodes = 50;
    for (RelationId k = 0; k < vocab.size(); ++k) t.ef.push_back(rng() % 51);
    const auto iefv = inverse_entity_frequency(t);
    const auto rel = testing::random_tensor({vocab.size(), 5}, rng);
    const auto proj = testing::random_tensor({5, 5}, rng);
    const auto got = rfief_embed(rfm, iefv, rel, proj);
    for (NodeId v = 0; v < 8; ++v) {
      for (std::size_t j = 0; j < 5; ++j) {
        Real want = 0.0;
        for (RelationId k = 0; k < vocab.size(); ++k)
          for (std::size_t d = 0; d < 5; ++d) want += rfm.at(v, k) * iefv.ief[k] * rel.at(k, d) * proj.at(d, j);
        CHECK(std::abs(got.at(v, j) - want) < 1e-5);
      }
    }
    CHECK(finite_diff_check([&] { return sum(mul(rfief_embed(rfm, iefv, rel, proj), rfief_embed(rfm, iefv, rel, proj))); },
                            {rel, proj}, 1e-6) < 1e-4);
  }
}

TEST_CASE("inspect_weights") {
  RFMatrix single{1, 3, {0, 2, 0}};
  const IefVector flat{{1.0, 1.0, 1.0}};
  const auto one = inspect_weights(single, flat, 0);
  REQUIRE(one.weights.size() == 1);
  CHECK(one.weights[0] == std::pair<RelationId, Real>{1, 1.0});

  RFMatrix uniform{1, 4, {1, 1, 1, 1}};
  for (const auto& [r, w] : inspect_weights(uniform, {{0.5, 0.5, 0.5, 0.5}}, 0).weights) CHECK(w == 0.25);

  RFMatrix zero{1, 2, {0, 0}};
  CHECK(inspect_weights(zero, {{1.0, 1.0}}, 0).weights.empty());
  CHECK_THROWS_AS(inspect_weights(zero, {{1.0, 1.0}}, 3), ValidationError);

  // self-loop style relation with negative IEF is reported as suppressed
  RFMatrix mixed{1, 3, {1, 1, 1}};
  EfTable t{{1, 4, 10}, 10};
  const auto report = inspect_weights(mixed, inverse_entity_frequency(t), 0);
  REQUIRE(report.suppressed.size() == 1);
  CHECK(report.suppressed[0].first == 2);
  CHECK(report.suppressed[0].second < 0.0);

  // raising one relation's EF lowers its share and raises the others
  RFMatrix three{1, 3, {1, 1, 1}};
  EfTable base{{1, 1, 1}, 100};
  EfTable bumped{{1, 1, 20}, 100};
  auto share = [](const WeightReport& w, RelationId r) {
    for (const auto& [rr, x] : w.weights)
      if (rr == r) return x;
    return 0.0;
  };
  const auto before = inspect_weights(three, inverse_entity_frequency(base), 0);
  const auto after = inspect_weights(three, inverse_entity_frequency(bumped), 0);
  CHECK(share(after, 2) < share(before, 2));
  CHECK(share(after, 0) > share(before, 0));
  CHECK(share(after, 1) > share(before, 1));
}
