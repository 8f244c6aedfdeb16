#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <vector>

#include "nutrea/data.hpp"
#include "nutrea/graph.hpp"
#include "nutrea/tensor.hpp"

namespace testing {

using namespace nutrea;

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("nutrea_test_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, Real lo = -1.0, Real hi = 1.0,
                            bool param = true) {
  std::uniform_real_distribution<Real> u(lo, hi);
  std::vector<Real> v(shape_size(shape));
  for (auto& x : v) x = u(rng);
  return param ? Tensor::parameter(std::move(shape), std::move(v))
               : Tensor::from(std::move(shape), std::move(v));
}

inline std::vector<Real> to_vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

inline Real max_abs_diff(std::span<const Real> a, std::span<const Real> b) {
  Real worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline RelationVocab relation_vocab(std::size_t count) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < count; ++i) names.push_back("r" + std::to_string(i));
  return RelationVocab(names);
}

/// Random instance with distinct triplets; not necessarily connected.
inline SubgraphInstance random_instance(std::mt19937_64& rng, std::size_t nodes, std::size_t triplets,
                                        std::size_t relations) {
  SubgraphInstance inst;
  inst.id = "rand";
  inst.num_nodes = nodes;
  inst.question_tokens = {1};
  std::set<Triplet> seen;
  std::uniform_int_distribution<std::size_t> node(0, nodes - 1), rel(0, relations - 1);
  for (std::size_t attempt = 0; seen.size() < triplets && attempt < 50 * triplets + 50; ++attempt) {
    Triplet t{node(rng), rel(rng), node(rng)};
    if (t.head == t.tail) continue;
    if (seen.insert(t).second) inst.triplets.push_back(t);
  }
  inst.seeds = {0};
  return inst;
}

}  // namespace testing
