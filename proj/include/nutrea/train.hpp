#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nutrea/data.hpp"
#include "nutrea/model.hpp"
#include "nutrea/tensor.hpp"

namespace nutrea {

struct TrainConfig {
  double learning_rate = 5e-4;
  double lr_decay = 0.99;  // multiplied in once per epoch
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// KL(p* || s) with p* uniform over the answers. Throws ContractError when
/// `answers` is empty.
Tensor kl_loss(const Tensor& scores, const std::vector<NodeId>& answers);

/// 1 iff the top-scoring node (lowest id on ties) is an answer.
int hit_at_1(std::span<const Real> scores, const std::vector<NodeId>& answers);

struct F1Result {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<NodeId> predicted;  // in descending score order
  bool no_answers = false;
};

/// Takes nodes by descending score (lowest id on ties) until the cumulative
/// score reaches `threshold`, including the node that crosses it.
F1Result f1_at_threshold(std::span<const Real> scores, const std::vector<NodeId>& answers,
                         double threshold = 0.95);

struct InstanceResult {
  std::string id;
  int hit = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  std::vector<NodeId> predicted;
};

struct EvalReport {
  double hit_at_1 = 0.0;
  double f1 = 0.0;
  std::vector<InstanceResult> per_instance;

  nlohmann::json summary_json() const;
};

/// Evaluation over a dataset; `jobs` > 1 fans instances out over threads.
EvalReport evaluate(const Model& model, const Dataset& dataset, std::size_t jobs = 1);
EvalReport evaluate_prepared(const Model& model, const std::vector<PreparedGraph>& graphs,
                             std::size_t jobs = 1);

/// Adam with bias correction. Gradients are read from the parameter tensors.
class Adam {
 public:
  Adam(std::vector<Tensor> params, double beta1, double beta2, double eps);
  void step(double learning_rate, double grad_scale = 1.0);
  void zero_grad();

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<Real>> m_, v_;
  double beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double dev_hit_at_1 = 0.0;
  double dev_f1 = 0.0;
  std::size_t skipped = 0;

  nlohmann::json to_json() const;
};

struct TrainResult {
  Model model;  // best-dev parameters, rounded to checkpoint precision
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Precomputes the EF table on `train`, then trains with per-epoch shuffled
/// mini-batches, exponential lr decay and best-dev-H@1 retention.
TrainResult train(const Dataset& train_set, const Dataset& dev_set, const ModelConfig& model_config,
                  const TrainConfig& train_config, const EpochCallback& on_epoch = {});

// --- protocols ------------------------------------------------------------

enum class Protocol { ablation, lambda_sweep, incomplete_kg, layer_sweep };

Protocol parse_protocol(const std::string& name);
std::string protocol_name(Protocol p);

struct ProtocolCell {
  std::string label;
  ModelConfig model;
  double keep_fraction = 1.0;
};

std::vector<ProtocolCell> protocol_cells(Protocol protocol, const ModelConfig& base);

struct ProtocolRow {
  std::string protocol;
  std::string cell;
  std::string config_hash;
  std::uint64_t seed = 0;
  double keep_fraction = 1.0;
  double dev_hit_at_1 = 0.0, dev_f1 = 0.0;
  double test_hit_at_1 = 0.0, test_f1 = 0.0;
  double wall_seconds = 0.0;
  nlohmann::json config;

  nlohmann::json to_json() const;
  static ProtocolRow from_json(const nlohmann::json& j);
};

struct CellSummary {
  std::string cell;
  std::size_t runs = 0;
  double dev_hit_at_1 = 0.0, dev_f1 = 0.0, test_hit_at_1 = 0.0, test_f1 = 0.0;
};

struct ProtocolOutcome {
  std::vector<ProtocolRow> rows;        // every (cell, seed), including resumed ones
  std::vector<CellSummary> summary;     // means over seeds, in cell order
  std::size_t computed = 0;             // rows trained in this invocation
};

struct ProtocolData {
  const Dataset* train = nullptr;
  const Dataset* dev = nullptr;
  const Dataset* test = nullptr;
};

/// Runs the grid for every seed, appending one JSON line per (cell, seed) to
/// `results_path`. Rows already present there (same config hash and seed)
/// are reused instead of retrained.
ProtocolOutcome run_protocol(Protocol protocol, const ModelConfig& base_model,
                             const TrainConfig& base_train, const ProtocolData& data,
                             const std::vector<std::uint64_t>& seeds,
                             const std::filesystem::path& results_path, std::size_t jobs = 1,
                             const std::function<void(const ProtocolRow&)>& on_row = {});

/// SHA-256 hex digest of the canonical JSON dump.
std::string config_hash(const nlohmann::json& config);

}  // namespace nutrea
