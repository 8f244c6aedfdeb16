#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "helpers.hpp"
#include "nutrea/error.hpp"
#include "nutrea/train.hpp"

using namespace nutrea;
namespace fs = std::filesystem;
using testing::random_tensor;

namespace {

// Selection-based reading of the 0.95 rule: repeatedly take the best
// remaining node (lowest id on ties) until the running total reaches it.
std::vector<NodeId> brute_prefix(const std::vector<Real>& s, double threshold) {
  std::vector<bool> used(s.size(), false);
  std::vector<NodeId> out;
  double total = 0.0;
  while (out.size() < s.size()) {
    NodeId best = s.size();
    for (NodeId v = 0; v < s.size(); ++v)
      if (!used[v] && (best == s.size() || s[v] > s[best])) best = v;
    used[best] = true;
    out.push_back(best);
    total += s[best];
    if (total >= threshold) break;
  }
  return out;
}

SyntheticDataset small_synthetic(std::size_t count, std::uint64_t seed, std::size_t hops = 1) {
  SyntheticConfig cfg;
  cfg.num_instances = count;
  cfg.nodes_per_graph = 8;
  cfg.num_relations = 4;
  cfg.hops = hops;
  cfg.seed = seed;
  return generate_synthetic(cfg);
}

Dataset take(const Dataset& ds, std::size_t begin, std::size_t end) {
  Dataset out = ds;
  out.instances.assign(ds.instances.begin() + begin, ds.instances.begin() + end);
  return out;
}

ModelConfig tiny_model() {
  ModelConfig m;
  m.dim = 8;
  m.layers = 1;
  m.num_expansion = 2;
  m.num_backup = 2;
  m.inference_iterations = 1;
  return m;
}

}  // namespace

TEST_CASE("kl_loss") {
  CHECK(std::abs(kl_loss(Tensor::from({4}, {0.5, 0, 0.5, 0}), {0, 2}).item()) < 1e-12);
  const Real inv_e = std::exp(-1.0);
  CHECK(kl_loss(Tensor::from({2}, {inv_e, 1 - inv_e}), {0}).item() == doctest::Approx(1.0).epsilon(1e-12));

  const auto before = kl_loss(Tensor::from({3}, {0.2, 0.5, 0.3}), {0}).item();
  const auto after = kl_loss(Tensor::from({3}, {0.3, 0.4, 0.3}), {0}).item();
  CHECK(after < before);

  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = softmax(random_tensor({6}, rng, -3, 3, false));
    std::vector<NodeId> answers{static_cast<NodeId>(rng() % 6)};
    if (rng() % 2) answers.push_back((answers[0] + 1) % 6);
    CHECK(kl_loss(s, answers).item() >= -1e-12);
  }
  const auto logits = random_tensor({5}, rng);
  CHECK(finite_diff_check([&] { return kl_loss(softmax(logits), {1, 3}); }, {logits}, 1e-6) < 1e-4);
  CHECK_THROWS_AS(kl_loss(Tensor::from({2}, {0.5, 0.5}), {}), ContractError);
}

TEST_CASE("hit_at_1") {
  const std::vector<Real> on_answer{0, 1, 0};
  CHECK(hit_at_1(on_answer, {1}) == 1);
  CHECK(hit_at_1(on_answer, {2}) == 0);
  const std::vector<Real> tie{0.2, 0.4, 0.4};
  CHECK(hit_at_1(tie, {2}) == 0);
  CHECK(hit_at_1(tie, {1}) == 1);
}

TEST_CASE("f1_at_threshold") {
  const std::vector<Real> s{0.5, 0.3, 0.1, 0.1};
  const auto r = f1_at_threshold(s, {0, 1});
  CHECK(r.predicted == std::vector<NodeId>{0, 1, 2, 3});
  CHECK(r.precision == 0.5);
  CHECK(r.recall == 1.0);
  CHECK(r.f1 == 2.0 / 3.0);

  const std::vector<Real> peaked{0.02, 0.96, 0.02};
  const auto one = f1_at_threshold(peaked, {1});
  CHECK(one.predicted == std::vector<NodeId>{1});
  CHECK(one.f1 == 1.0);

  CHECK(f1_at_threshold(s, {3}, 0.0).predicted == std::vector<NodeId>{0});
  CHECK(f1_at_threshold(s, {}).no_answers);

  std::mt19937_64 rng(62);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 12;
    auto logits = random_tensor({n}, rng, -3, 3, false);
    std::vector<Real> scores = testing::to_vec(softmax(logits));
    if (trial % 4 == 0 && n > 2) scores[1] = scores[0];  // exercise ties
    std::vector<NodeId> answers;
    for (NodeId v = 0; v < n; ++v)
      if (rng() % 3 == 0) answers.push_back(v);
    const auto got = f1_at_threshold(scores, answers);
    const auto want = brute_prefix(scores, 0.95);
    CHECK(got.predicted == want);
    if (answers.empty()) continue;
    std::size_t correct = 0;
    for (auto v : want) correct += std::count(answers.begin(), answers.end(), v);
    const double p = static_cast<double>(correct) / want.size();
    const double rcl = static_cast<double>(correct) / answers.size();
    CHECK(got.f1 == doctest::Approx(p + rcl > 0 ? 2 * p * rcl / (p + rcl) : 0.0).epsilon(1e-12));
  }
}

TEST_CASE("adam") {
  auto x = Tensor::parameter({2}, {1.0, -2.0});
  auto unused = Tensor::parameter({1}, {5.0});
  Adam adam({x, unused}, 0.9, 0.999, 1e-8);
  for (int step = 0; step < 200; ++step) {
    adam.zero_grad();
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = sum(mul(x, x));
    }
    tape.backward(loss);
    adam.step(0.05);
  }
  CHECK(std::abs(x[0]) < 0.05);
  CHECK(std::abs(x[1]) < 0.05);
  CHECK(unused[0] == 5.0);
}

TEST_CASE("memorizes a single instance and evaluates it") {
  const auto syn = small_synthetic(3, 5);
  const auto one = take(syn.dataset, 0, 1);
  TrainConfig tc;
  tc.learning_rate = 1e-2;
  tc.lr_decay = 1.0;
  tc.epochs = 60;
  tc.batch_size = 1;
  const auto result = train(one, one, tiny_model(), tc);
  CHECK(result.history.back().train_loss < 0.05);
  const auto report = evaluate(result.model, one);
  CHECK(report.hit_at_1 == 1.0);
  CHECK(report.per_instance.size() == 1);
}

TEST_CASE("training is reproducible and decays the learning rate") {
  const auto syn = small_synthetic(30, 6, 2);
  const auto tr = take(syn.dataset, 0, 20);
  const auto dv = take(syn.dataset, 20, 30);
  TrainConfig tc;
  tc.epochs = 11;
  tc.batch_size = 4;
  tc.seed = 3;
  const auto a = train(tr, dv, tiny_model(), tc);
  const auto b = train(tr, dv, tiny_model(), tc);
  REQUIRE(a.history.size() == 11);
  CHECK(a.history[10].learning_rate == doctest::Approx(5e-4 * std::pow(0.99, 10)).epsilon(1e-12));
  for (std::size_t e = 0; e < a.history.size(); ++e) CHECK(a.history[e].to_json() == b.history[e].to_json());
  const auto pa = a.model.params().named();
  const auto pb = b.model.params().named();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t k = 0; k < pa.size(); ++k) CHECK(testing::to_vec(pa[k].second) == testing::to_vec(pb[k].second));
  // best-dev parameters are kept at float precision
  for (const auto& [name, t] : a.model.params().named())
    for (auto v : t.values()) CHECK(v == static_cast<Real>(static_cast<float>(v)));

  tc.seed = 4;
  const auto c = train(tr, dv, tiny_model(), tc);
  CHECK(c.history.back().train_loss != a.history.back().train_loss);
}

TEST_CASE("evaluation aggregates") {
  const auto syn = small_synthetic(40, 7);
  const auto tr = take(syn.dataset, 0, 30);
  const auto dv = take(syn.dataset, 30, 40);
  TrainConfig tc;
  tc.epochs = 3;
  const auto model = train(tr, dv, tiny_model(), tc).model;
  const auto report = evaluate(model, dv);
  double hits = 0.0, f1 = 0.0;
  for (const auto& r : report.per_instance) {
    hits += r.hit;
    f1 += r.f1;
  }
  CHECK(report.hit_at_1 == doctest::Approx(hits / 10).epsilon(1e-12));
  CHECK(report.f1 == doctest::Approx(f1 / 10).epsilon(1e-12));

  Dataset shuffled = dv;
  std::reverse(shuffled.instances.begin(), shuffled.instances.end());
  const auto again = evaluate(model, shuffled, 3);
  CHECK(again.hit_at_1 == doctest::Approx(report.hit_at_1).epsilon(1e-12));
  CHECK(again.f1 == doctest::Approx(report.f1).epsilon(1e-12));

  Dataset other = dv;
  other.relation_vocab = RelationVocab({"x", "y"});
  CHECK_THROWS_AS(evaluate(model, other), ValidationError);
}

TEST_CASE("protocol grids") {
  const ModelConfig base;
  const auto ablation = protocol_cells(Protocol::ablation, base);
  REQUIRE(ablation.size() == 4);
  CHECK(ablation[0].model.backup);
  CHECK(ablation[0].model.rfief);
  CHECK(!ablation[3].model.backup);
  CHECK(!ablation[3].model.rfief);

  const auto lambdas = protocol_cells(Protocol::lambda_sweep, base);
  REQUIRE(lambdas.size() == 3);
  CHECK(lambdas[0].model.lambda == 0.3);
  CHECK(lambdas[1].model.lambda == 0.6);
  CHECK(lambdas[2].model.lambda == 1.0);

  const auto kg = protocol_cells(Protocol::incomplete_kg, base);
  REQUIRE(kg.size() == 4);
  CHECK(kg[0].keep_fraction == 1.0);
  CHECK(kg[1].keep_fraction == 0.5);
  CHECK(kg[2].keep_fraction == 0.3);
  CHECK(kg[3].keep_fraction == 0.1);

  CHECK(parse_protocol(protocol_name(Protocol::layer_sweep)) == Protocol::layer_sweep);
  CHECK_THROWS_AS(parse_protocol("nope"), UsageError);

  CHECK(config_hash({{"a", 1}}) == config_hash({{"a", 1}}));
  CHECK(config_hash({{"a", 1}}) != config_hash({{"a", 2}}));
  CHECK(config_hash({{"a", 1}}).size() == 64);
}

TEST_CASE("protocol runs resume from their results file") {
  const auto syn = small_synthetic(24, 8);
  const auto tr = take(syn.dataset, 0, 16);
  const auto dv = take(syn.dataset, 16, 20);
  const auto te = take(syn.dataset, 20, 24);
  TrainConfig tc;
  tc.epochs = 1;
  const auto dir = fs::temp_directory_path() / ("nutrea_protocol_" + std::to_string(std::random_device{}()));
  fs::create_directories(dir);
  const auto results = dir / "ablation.jsonl";

  std::size_t streamed = 0;
  const auto first = run_protocol(Protocol::ablation, tiny_model(), tc, {&tr, &dv, &te}, {0, 1}, results, 2,
                                  [&](const ProtocolRow&) { ++streamed; });
  CHECK(first.rows.size() == 8);
  CHECK(first.computed == 8);
  CHECK(streamed == 8);
  REQUIRE(first.summary.size() == 4);
  CHECK(first.summary[0].runs == 2);

  const auto second = run_protocol(Protocol::ablation, tiny_model(), tc, {&tr, &dv, &te}, {0, 1}, results);
  CHECK(second.computed == 0);
  CHECK(second.rows.size() == 8);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(second.summary[i].test_hit_at_1 == doctest::Approx(first.summary[i].test_hit_at_1));

  // an extra seed only trains the missing rows
  const auto third = run_protocol(Protocol::ablation, tiny_model(), tc, {&tr, &dv, &te}, {0, 1, 2}, results);
  CHECK(third.computed == 4);
  std::ifstream in(results);
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) lines += !line.empty();
  CHECK(lines == 12);
  fs::remove_all(dir);
}
