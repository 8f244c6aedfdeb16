#include "nutrea/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include <openssl/evp.h>

#include "nutrea/error.hpp"

namespace nutrea {

using json = nlohmann::json;

// --- config ---------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ValidationError("lr_decay must lie in (0, 1]");
  if (batch_size < 1) throw ValidationError("batch_size must be at least 1");
}

json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"lr_decay", lr_decay}, {"epochs", epochs},
          {"batch_size", batch_size},       {"seed", seed},         {"beta1", beta1},
          {"beta2", beta2},                 {"adam_eps", adam_eps}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  try {
    c.learning_rate = j.at("learning_rate");
    c.lr_decay = j.at("lr_decay");
    c.epochs = j.at("epochs");
    c.batch_size = j.at("batch_size");
    c.seed = j.at("seed");
    c.beta1 = j.at("beta1");
    c.beta2 = j.at("beta2");
    c.adam_eps = j.at("adam_eps");
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed train config: ") + e.what());
  }
  c.validate();
  return c;
}

// --- loss and metrics -----------------------------------------------------

Tensor kl_loss(const Tensor& scores, const std::vector<NodeId>& answers) {
  if (answers.empty()) throw ContractError("kl_loss needs at least one answer");
  const auto k = static_cast<Real>(answers.size());
  const Tensor column = reshape(scores, {scores.size(), 1});
  const Tensor log_s = log_clamped(gather_rows(column, answers), 1e-12);
  // Σ_a (1/k)(ln(1/k) - ln s_a)
  return add(scale(sum(log_s), -1.0 / k), Tensor::scalar(-std::log(k)));
}

namespace {

std::vector<NodeId> ranked_nodes(std::span<const Real> scores) {
  std::vector<NodeId> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](NodeId a, NodeId b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

int hit_at_1(std::span<const Real> scores, const std::vector<NodeId>& answers) {
  if (scores.empty()) return 0;
  NodeId best = 0;
  for (NodeId v = 1; v < scores.size(); ++v)
    if (scores[v] > scores[best]) best = v;
  return std::find(answers.begin(), answers.end(), best) != answers.end() ? 1 : 0;
}

F1Result f1_at_threshold(std::span<const Real> scores, const std::vector<NodeId>& answers,
                         double threshold) {
  F1Result r;
  double cumulative = 0.0;
  for (NodeId v : ranked_nodes(scores)) {
    r.predicted.push_back(v);
    cumulative += scores[v];
    if (cumulative >= threshold) break;
  }
  if (answers.empty()) {
    r.no_answers = true;
    return r;
  }
  const std::set<NodeId> gold(answers.begin(), answers.end());
  std::size_t correct = 0;
  for (auto v : r.predicted) correct += gold.count(v);
  r.precision = r.predicted.empty() ? 0.0 : static_cast<double>(correct) / r.predicted.size();
  r.recall = static_cast<double>(correct) / gold.size();
  if (r.precision + r.recall > 0.0)
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

json EvalReport::summary_json() const {
  return {{"hit_at_1", hit_at_1}, {"f1", f1}, {"instances", per_instance.size()}};
}

namespace {

template <typename Fn>
void parallel_for(std::size_t count, std::size_t jobs, Fn fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (failure) std::rethrow_exception(failure);
}

void require_same_vocab(const Model& model, const Dataset& ds) {
  if (!(model.relations() == ds.relation_vocab)) {
    throw ValidationError("dataset relation vocabulary does not match the model's");
  }
}

// Question token ids are re-keyed by surface string when the dataset was
// loaded with a different token vocabulary; unseen tokens map to <unk>.
std::vector<PreparedGraph> prepare_all(const Model& model, const Dataset& ds) {
  require_same_vocab(model, ds);
  const bool same_tokens = model.tokens() == ds.token_vocab;
  std::vector<PreparedGraph> graphs;
  graphs.reserve(ds.instances.size());
  for (const auto& inst : ds.instances) {
    if (same_tokens) {
      graphs.push_back(model.prepare(inst));
      continue;
    }
    SubgraphInstance copy = inst;
    for (auto& t : copy.question_tokens) t = model.tokens().lookup(ds.token_vocab.token(t));
    graphs.push_back(model.prepare(copy));
  }
  return graphs;
}

}  // namespace

EvalReport evaluate_prepared(const Model& model, const std::vector<PreparedGraph>& graphs,
                             std::size_t jobs) {
  EvalReport report;
  report.per_instance.resize(graphs.size());
  parallel_for(graphs.size(), jobs, [&](std::size_t i) {
    const auto& inst = graphs[i].graph.base();
    const auto scores = model.forward(graphs[i]).scores;
    auto& out = report.per_instance[i];
    out.id = inst.id;
    out.hit = hit_at_1(scores.values(), inst.answers);
    auto f1 = f1_at_threshold(scores.values(), inst.answers);
    out.precision = f1.precision;
    out.recall = f1.recall;
    out.f1 = f1.f1;
    out.predicted = std::move(f1.predicted);
  });
  if (!graphs.empty()) {
    for (const auto& r : report.per_instance) {
      report.hit_at_1 += r.hit;
      report.f1 += r.f1;
    }
    report.hit_at_1 /= static_cast<double>(graphs.size());
    report.f1 /= static_cast<double>(graphs.size());
  }
  return report;
}

EvalReport evaluate(const Model& model, const Dataset& dataset, std::size_t jobs) {
  return evaluate_prepared(model, prepare_all(model, dataset), jobs);
}

// --- optimizer ------------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step(double learning_rate, double grad_scale) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (!p.has_grad()) continue;
    const auto& g = p.impl()->grad;
    auto values = p.mutable_values();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double gi = g[i] * grad_scale;
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      values[i] -= learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

// --- training -------------------------------------------------------------

json EpochRecord::to_json() const {
  return {{"epoch", epoch},       {"lr", learning_rate},     {"train_loss", train_loss},
          {"dev_hit_at_1", dev_hit_at_1}, {"dev_f1", dev_f1}, {"skipped", skipped}};
}

TrainResult train(const Dataset& train_set, const Dataset& dev_set, const ModelConfig& model_config,
                  const TrainConfig& tc, const EpochCallback& on_epoch) {
  tc.validate();
  model_config.validate();
  if (train_set.instances.empty()) throw ContractError("training set is empty");
  if (dev_set.instances.empty()) throw ContractError("dev set is empty");

  EfTable ef = entity_frequency(train_set, model_config.inverse_edges);
  Model model(model_config, train_set.relation_vocab, train_set.token_vocab, ef, tc.seed);
  auto train_graphs = prepare_all(model, train_set);
  const auto dev_graphs = prepare_all(model, dev_set);

  std::vector<std::size_t> trainable;
  for (std::size_t i = 0; i < train_graphs.size(); ++i)
    if (!train_graphs[i].graph.base().answers.empty()) trainable.push_back(i);
  const std::size_t skipped = train_graphs.size() - trainable.size();
  if (trainable.empty()) throw DataError("no training instance has an answer");

  std::vector<Tensor> params;
  for (auto& [name, t] : model.params().named()) params.push_back(t);
  Adam adam(params, tc.beta1, tc.beta2, tc.adam_eps);
  std::mt19937_64 shuffle_rng(tc.seed ^ 0x5bd1e995ULL);

  TrainResult result{model.clone(), {}, 0};
  double best_hit = -1.0;
  double lr = tc.learning_rate;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    std::shuffle(trainable.begin(), trainable.end(), shuffle_rng);
    double loss_total = 0.0;
    for (std::size_t start = 0; start < trainable.size(); start += tc.batch_size) {
      const std::size_t end = std::min(trainable.size(), start + tc.batch_size);
      adam.zero_grad();
      for (std::size_t b = start; b < end; ++b) {
        const auto& g = train_graphs[trainable[b]];
        Tape tape;
        Tensor loss;
        try {
          TapeScope scope(tape);
          loss = kl_loss(model.forward(g).scores, g.graph.base().answers);
        } catch (const ContractError& e) {
          throw Error(Error::Kind::divergence, std::string("training diverged at epoch ") +
                                                   std::to_string(epoch) + ": " + e.what());
        }
        if (!std::isfinite(loss.item())) {
          throw Error(Error::Kind::divergence,
                      "training loss is not finite at epoch " + std::to_string(epoch));
        }
        tape.backward(loss);
        loss_total += loss.item();
      }
      adam.step(lr, 1.0 / static_cast<double>(end - start));
    }
    adam.zero_grad();

    const auto dev = evaluate_prepared(model, dev_graphs);
    EpochRecord rec{epoch, lr, loss_total / static_cast<double>(trainable.size()), dev.hit_at_1,
                    dev.f1, skipped};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (dev.hit_at_1 > best_hit) {
      best_hit = dev.hit_at_1;
      result.best_epoch = epoch;
      result.model = model.clone();
    }
    lr *= tc.lr_decay;
  }
  result.model.quantize();
  return result;
}

// --- protocols ------------------------------------------------------------

Protocol parse_protocol(const std::string& name) {
  if (name == "ablation") return Protocol::ablation;
  if (name == "lambda_sweep") return Protocol::lambda_sweep;
  if (name == "incomplete_kg") return Protocol::incomplete_kg;
  if (name == "layer_sweep") return Protocol::layer_sweep;
  throw UsageError("unknown protocol '" + name +
                   "' (expected ablation, lambda_sweep, incomplete_kg or layer_sweep)");
}

std::string protocol_name(Protocol p) {
  switch (p) {
    case Protocol::ablation: return "ablation";
    case Protocol::lambda_sweep: return "lambda_sweep";
    case Protocol::incomplete_kg: return "incomplete_kg";
    case Protocol::layer_sweep: return "layer_sweep";
  }
  return "unknown";
}

std::vector<ProtocolCell> protocol_cells(Protocol protocol, const ModelConfig& base) {
  std::vector<ProtocolCell> cells;
  switch (protocol) {
    case Protocol::ablation:
      for (bool rfief : {true, false})
        for (bool backup : {true, false}) {
          ProtocolCell c{"", base, 1.0};
          c.model.rfief = rfief;
          c.model.backup = backup;
          c.label = std::string(rfief ? "rfief" : "no_rfief") + "+" + (backup ? "backup" : "no_backup");
          cells.push_back(c);
        }
      break;
    case Protocol::lambda_sweep:
      for (double lambda : {0.3, 0.6, 1.0}) {
        ProtocolCell c{"", base, 1.0};
        c.model.lambda = lambda;
        char label[32];
        std::snprintf(label, sizeof label, "lambda=%.1f", lambda);
        c.label = label;
        cells.push_back(c);
      }
      break;
    case Protocol::incomplete_kg:
      for (double keep : {1.0, 0.5, 0.3, 0.1}) {
        ProtocolCell c{"", base, keep};
        char label[32];
        std::snprintf(label, sizeof label, "keep=%.1f", keep);
        c.label = label;
        cells.push_back(c);
      }
      break;
    case Protocol::layer_sweep:
      for (std::size_t layers : {1, 2, 3})
        for (bool backup : {true, false}) {
          ProtocolCell c{"", base, 1.0};
          c.model.layers = layers;
          c.model.backup = backup;
          c.label = "layers=" + std::to_string(layers) + (backup ? "+backup" : "+no_backup");
          cells.push_back(c);
        }
      break;
  }
  return cells;
}

std::string config_hash(const json& config) {
  const std::string text = config.dump();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(Error::Kind::io, "SHA-256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

json ProtocolRow::to_json() const {
  return {{"protocol", protocol},       {"cell", cell},
          {"config_hash", config_hash}, {"seed", seed},
          {"keep_fraction", keep_fraction},
          {"metrics", {{"dev_hit_at_1", dev_hit_at_1}, {"dev_f1", dev_f1},
                       {"test_hit_at_1", test_hit_at_1}, {"test_f1", test_f1}}},
          {"wall_seconds", wall_seconds}, {"config", config}};
}

ProtocolRow ProtocolRow::from_json(const json& j) {
  ProtocolRow r;
  r.protocol = j.at("protocol");
  r.cell = j.at("cell");
  r.config_hash = j.at("config_hash");
  r.seed = j.at("seed");
  r.keep_fraction = j.at("keep_fraction");
  const auto& m = j.at("metrics");
  r.dev_hit_at_1 = m.at("dev_hit_at_1");
  r.dev_f1 = m.at("dev_f1");
  r.test_hit_at_1 = m.at("test_hit_at_1");
  r.test_f1 = m.at("test_f1");
  r.wall_seconds = j.at("wall_seconds");
  r.config = j.at("config");
  return r;
}

ProtocolOutcome run_protocol(Protocol protocol, const ModelConfig& base_model,
                             const TrainConfig& base_train, const ProtocolData& data,
                             const std::vector<std::uint64_t>& seeds,
                             const std::filesystem::path& results_path, std::size_t jobs,
                             const std::function<void(const ProtocolRow&)>& on_row) {
  if (seeds.empty()) throw UsageError("protocol needs at least one seed");
  if (!data.train || !data.dev || !data.test) throw ContractError("protocol needs train, dev and test sets");

  std::map<std::pair<std::string, std::uint64_t>, ProtocolRow> existing;
  if (std::filesystem::exists(results_path)) {
    for (const auto& line : read_lines(results_path)) {
      if (line.empty()) continue;
      try {
        auto row = ProtocolRow::from_json(json::parse(line));
        existing[{row.config_hash, row.seed}] = row;
      } catch (const json::exception& e) {
        throw DataError("malformed results row in " + results_path.string() + ": " + e.what());
      }
    }
  }

  const auto cells = protocol_cells(protocol, base_model);
  struct Task {
    const ProtocolCell* cell;
    std::uint64_t seed;
    std::string hash;
    json config;
  };
  ProtocolOutcome outcome;
  std::vector<Task> todo;
  std::vector<std::pair<std::string, std::uint64_t>> order;
  for (const auto& cell : cells) {
    TrainConfig tc = base_train;
    tc.seed = 0;
    json config = {{"protocol", protocol_name(protocol)},
                   {"model", cell.model.to_json()},
                   {"train", tc.to_json()},
                   {"keep_fraction", cell.keep_fraction},
                   {"data", {{"train", data.train->instances.size()},
                             {"dev", data.dev->instances.size()},
                             {"test", data.test->instances.size()}}}};
    const auto hash = config_hash(config);
    for (auto seed : seeds) {
      order.emplace_back(hash, seed);
      if (!existing.count({hash, seed})) todo.push_back({&cell, seed, hash, config});
    }
  }

  std::ofstream out;
  if (!todo.empty()) {
    if (results_path.has_parent_path()) std::filesystem::create_directories(results_path.parent_path());
    out.open(results_path, std::ios::app | std::ios::binary);
    if (!out) throw IoError("cannot append to " + results_path.string());
  }
  std::mutex write_mutex;
  parallel_for(todo.size(), jobs, [&](std::size_t i) {
    const auto& task = todo[i];
    const auto started = std::chrono::steady_clock::now();
    TrainConfig tc = base_train;
    tc.seed = task.seed;
    const double keep = task.cell->keep_fraction;
    const Dataset train_ds = corrupt_kg(*data.train, keep, task.seed);
    const Dataset dev_ds = corrupt_kg(*data.dev, keep, task.seed + 1);
    const Dataset test_ds = corrupt_kg(*data.test, keep, task.seed + 2);
    auto trained = train(train_ds, dev_ds, task.cell->model, tc);
    const auto dev = evaluate(trained.model, dev_ds);
    const auto test = evaluate(trained.model, test_ds);
    ProtocolRow row;
    row.protocol = protocol_name(protocol);
    row.cell = task.cell->label;
    row.config_hash = task.hash;
    row.seed = task.seed;
    row.keep_fraction = keep;
    row.dev_hit_at_1 = dev.hit_at_1;
    row.dev_f1 = dev.f1;
    row.test_hit_at_1 = test.hit_at_1;
    row.test_f1 = test.f1;
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    row.config = task.config;
    std::lock_guard lock(write_mutex);
    out << row.to_json().dump() << '\n';
    out.flush();
    existing[{row.config_hash, row.seed}] = row;
    ++outcome.computed;
    if (on_row) on_row(row);
  });

  for (const auto& key : order) outcome.rows.push_back(existing.at(key));
  for (const auto& cell : cells) {
    CellSummary s{cell.label};
    for (const auto& row : outcome.rows) {
      if (row.cell != cell.label) continue;
      ++s.runs;
      s.dev_hit_at_1 += row.dev_hit_at_1;
      s.dev_f1 += row.dev_f1;
      s.test_hit_at_1 += row.test_hit_at_1;
      s.test_f1 += row.test_f1;
    }
    if (s.runs) {
      const double n = static_cast<double>(s.runs);
      s.dev_hit_at_1 /= n;
      s.dev_f1 /= n;
      s.test_hit_at_1 /= n;
      s.test_f1 /= n;
    }
    outcome.summary.push_back(s);
  }
  return outcome;
}

}  // namespace nutrea
