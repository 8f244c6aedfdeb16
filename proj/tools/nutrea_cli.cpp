// Command-line front end. Talks to the library only through the C API.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nutrea/nutrea.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int exit_usage = 1;
constexpr int exit_data = 2;

struct Failure {
  int code;
  std::string message;
};

int exit_code(nutrea_status s) { return s == NUTREA_ERR_USAGE ? exit_usage : exit_data; }

void check(nutrea_status s) {
  if (s != NUTREA_OK) throw Failure{exit_code(s), nutrea_last_error()};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  nutrea_string_free(s);
  return out;
}

template <typename T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(ptr); }
  T** out() { return &ptr; }
  T* get() const { return ptr; }
};

using Config = Handle<nutrea_config, nutrea_config_free>;
using DatasetHandle = Handle<nutrea_dataset, nutrea_dataset_free>;
using ModelHandle = Handle<nutrea_model, nutrea_model_free>;

void refuse_existing(const fs::path& p, bool force) {
  if (!force && fs::exists(p)) {
    throw Failure{exit_usage, p.string() + " already exists (pass --force to overwrite)"};
  }
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Failure{exit_data, "cannot write " + p.string()};
  out << text;
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("NUTREA_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  const auto seed = std::strtoull(v, &end, 10);
  if (*end != '\0') throw Failure{exit_usage, std::string("NUTREA_SEED is not an integer: ") + v};
  return seed;
}

// Model and optimizer flags shared by train and protocol. Values land in a
// key/value map and are applied on top of the optional --config file.
struct RunFlags {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::vector<std::string> switches_on, switches_off;

  void add(CLI::App* app) {
    app->add_option("--config", config_file, "key = value run config file")->check(CLI::ExistingFile);
    auto value = [&](const std::string& flag, const std::string& key, const std::string& help) {
      app->add_option_function<std::string>(
          flag, [this, key](const std::string& v) { values[key] = v; }, help);
    };
    value("--dim", "dim", "hidden size D (32)");
    value("--layers", "layers", "message-passing layers L (2)");
    value("--subtree-depth", "subtree_depth", "subtree depth K (1)");
    value("--num-expansion", "num_expansion", "expansion instructions N (3)");
    value("--num-backup", "num_backup", "backup instructions M (3)");
    value("--lambda", "lambda", "context coefficient (1.0)");
    value("--inference-iterations", "inference_iterations", "inference passes (2)");
    value("--ief-numerator", "ief_numerator", "corpus | instance (corpus)");
    value("--lr", "learning_rate", "initial learning rate (5e-4)");
    value("--lr-decay", "lr_decay", "per-epoch decay (0.99)");
    value("--epochs", "epochs", "training epochs (20)");
    value("--batch-size", "batch_size", "mini-batch size (16)");
    value("--seed", "seed", "seed (0); NUTREA_SEED overrides");
    auto flag = [&](const std::string& name, const std::string& key, bool on, const std::string& help) {
      app->add_flag_callback(
          name, [this, key, on] { values[key] = on ? "true" : "false"; }, help);
    };
    flag("--no-backup", "backup", false, "disable the Backup module");
    flag("--no-rfief", "rfief", false, "mean incident-relation node features");
    flag("--no-inverse-edges", "inverse_edges", false, "omit inverse edges");
    flag("--position-embeddings", "position_embeddings", true, "per-relation position embeddings");
  }

  void apply(Config& config) const {
    if (!config_file.empty()) {
      check(nutrea_config_load(config_file.c_str(), config.out()));
    } else {
      check(nutrea_config_new(config.out()));
    }
    for (const auto& [k, v] : values) check(nutrea_config_set(config.get(), k.c_str(), v.c_str()));
    if (auto seed = env_seed()) {
      check(nutrea_config_set(config.get(), "seed", std::to_string(*seed).c_str()));
    }
  }
};

std::string config_value(const Config& config, const char* key) {
  char* v = nullptr;
  check(nutrea_config_get(config.get(), key, &v));
  return take(v);
}

void load_dataset(const std::string& path, DatasetHandle& out) {
  if (path.empty()) throw Failure{exit_usage, "a dataset path is required"};
  check(nutrea_dataset_load(path.c_str(), out.out()));
}

// --- generate ---------------------------------------------------------------

struct GenerateArgs {
  std::string out;
  std::size_t train = 2000, dev = 250, test = 250;
  nutrea_synthetic_options options{};
  bool force = false;
};

void cmd_generate(GenerateArgs& a) {
  if (a.options.hops < 1 || a.options.hops > 4) throw Failure{exit_usage, "--hops must be in 1..4"};
  if (auto seed = env_seed()) a.options.seed = *seed;
  const fs::path dir = a.out;
  for (const char* f : {"train.jsonl", "dev.jsonl", "test.jsonl"}) refuse_existing(dir / f, a.force);

  a.options.num_instances = a.train + a.dev + a.test;
  DatasetHandle all;
  check(nutrea_generate(&a.options, all.out()));
  const std::size_t total = nutrea_dataset_size(all.get());
  if (total < a.options.num_instances) {
    std::cerr << "note: " << a.options.num_instances - total
              << " instances could not be sampled; the test split is shorter\n";
  }
  const std::size_t bounds[] = {0, std::min(total, a.train), std::min(total, a.train + a.dev), total};
  const char* names[] = {"train", "dev", "test"};
  fs::create_directories(dir);
  for (int i = 0; i < 3; ++i) {
    DatasetHandle split;
    check(nutrea_dataset_slice(all.get(), bounds[i], bounds[i + 1], names[i], split.out()));
    const auto path = dir / (std::string(names[i]) + ".jsonl");
    check(nutrea_dataset_write(split.get(), path.string().c_str()));
    std::cout << path.string() << ": " << nutrea_dataset_size(split.get()) << " instances\n";
  }
  const json provenance = {{"train", a.train},
                           {"dev", a.dev},
                           {"test", a.test},
                           {"nodes_per_graph", a.options.nodes_per_graph},
                           {"num_relations", a.options.num_relations},
                           {"edge_factor", a.options.edge_factor},
                           {"hops", a.options.hops},
                           {"constraint_fraction", a.options.constraint_fraction},
                           {"unanswerable_fraction", a.options.unanswerable_fraction},
                           {"seed", a.options.seed}};
  write_text(dir / "generate.json", provenance.dump(2) + "\n");
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  RunFlags run;
  std::string train, dev, out;
  bool force = false;
  bool quiet = false;
};

void print_epoch(const char* record, void* user) {
  if (*static_cast<bool*>(user)) return;
  const auto r = json::parse(record);
  std::cerr << "epoch " << r["epoch"] << "  loss " << r["train_loss"].get<double>() << "  dev H@1 "
            << r["dev_hit_at_1"].get<double>() << "  dev F1 " << r["dev_f1"].get<double>() << '\n';
}

void cmd_train(TrainArgs& a) {
  Config config;
  a.run.apply(config);
  if (!a.train.empty()) check(nutrea_config_set(config.get(), "train", a.train.c_str()));
  if (!a.dev.empty()) check(nutrea_config_set(config.get(), "dev", a.dev.c_str()));
  if (!a.out.empty()) check(nutrea_config_set(config.get(), "output", a.out.c_str()));
  const fs::path out = config_value(config, "output");
  if (out.empty()) throw Failure{exit_usage, "--out is required"};
  refuse_existing(out / "model.ckpt", a.force);

  DatasetHandle train, dev;
  load_dataset(config_value(config, "train"), train);
  load_dataset(config_value(config, "dev"), dev);

  ModelHandle model;
  char* history = nullptr;
  check(nutrea_train(config.get(), train.get(), dev.get(), print_epoch, &a.quiet, model.out(), &history));
  const auto records = json::parse(take(history));

  check(nutrea_config_write(config.get(), out.string().c_str()));
  check(nutrea_model_save(model.get(), (out / "model.ckpt").string().c_str()));
  std::string lines;
  for (const auto& r : records) lines += r.dump() + "\n";
  write_text(out / "history.jsonl", lines);
  std::cout << "checkpoint: " << (out / "model.ckpt").string() << '\n';
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, data, out;
  std::optional<double> corrupt_keep;
  std::uint64_t corrupt_seed = 0;
  std::size_t jobs = 1;
  bool force = false;
};

void cmd_eval(EvalArgs& a) {
  if (!a.out.empty()) refuse_existing(a.out, a.force);
  ModelHandle model;
  check(nutrea_model_load(a.checkpoint.c_str(), model.out()));
  DatasetHandle data;
  load_dataset(a.data, data);
  DatasetHandle corrupted;
  const nutrea_dataset* target = data.get();
  if (a.corrupt_keep) {
    check(nutrea_dataset_corrupt(data.get(), *a.corrupt_keep, a.corrupt_seed, corrupted.out()));
    target = corrupted.get();
  }
  nutrea_metrics m{};
  char* rows = nullptr;
  check(nutrea_evaluate(model.get(), target, a.jobs, &m, &rows));
  const std::string per_instance = take(rows);
  const json summary = {{"hit_at_1", m.hit_at_1},
                        {"f1", m.f1},
                        {"instances", m.instances},
                        {"checkpoint", a.checkpoint},
                        {"data", a.data},
                        {"corrupt_keep", a.corrupt_keep ? json(*a.corrupt_keep) : json(nullptr)}};
  if (!a.out.empty()) {
    write_text(a.out, per_instance);
    write_text(fs::path(a.out).replace_extension(".summary.json"), summary.dump(2) + "\n");
  }
  std::cout << summary.dump() << '\n';
}

// --- protocol ---------------------------------------------------------------

struct ProtocolArgs {
  RunFlags run;
  std::string name, train, dev, test, out;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::size_t jobs = 1;
};

void print_row(const char* row, void*) {
  const auto r = json::parse(row);
  std::cerr << r["cell"].get<std::string>() << " seed " << r["seed"] << "  test H@1 "
            << r["metrics"]["test_hit_at_1"].get<double>() << "  ("
            << r["wall_seconds"].get<double>() << " s)\n";
}

void cmd_protocol(ProtocolArgs& a) {
  Config config;
  a.run.apply(config);
  for (auto [key, value] : {std::pair{"train", &a.train}, {"dev", &a.dev}, {"test", &a.test}, {"output", &a.out}}) {
    if (!value->empty()) check(nutrea_config_set(config.get(), key, value->c_str()));
  }
  const fs::path out = config_value(config, "output");
  if (out.empty()) throw Failure{exit_usage, "--out is required"};
  DatasetHandle train, dev, test;
  load_dataset(config_value(config, "train"), train);
  load_dataset(config_value(config, "dev"), dev);
  load_dataset(config_value(config, "test"), test);
  fs::create_directories(out);
  check(nutrea_config_write(config.get(), out.string().c_str()));

  const auto results = out / (a.name + ".jsonl");
  char* summary = nullptr;
  check(nutrea_protocol_run(a.name.c_str(), config.get(), train.get(), dev.get(), test.get(),
                            a.seeds.data(), a.seeds.size(), results.string().c_str(), a.jobs,
                            print_row, nullptr, &summary));
  const auto s = json::parse(take(summary));
  json table = {{"protocol", a.name}, {"seeds", a.seeds}, {"cells", s["cells"]}};
  write_text(out / (a.name + ".summary.json"), table.dump(2) + "\n");
  std::cout << "cell                      dev H@1  test H@1  test F1\n";
  for (const auto& c : s["cells"]) {
    std::printf("%-24s  %7.3f  %8.3f  %7.3f\n", c["cell"].get<std::string>().c_str(),
                c["dev_hit_at_1"].get<double>(), c["test_hit_at_1"].get<double>(),
                c["test_f1"].get<double>());
  }
  std::cout << "rows computed this run: " << s["computed"] << "  results: " << results.string() << '\n';
}

// --- inspect ----------------------------------------------------------------

struct InspectArgs {
  std::string data, checkpoint, instance, out;
  std::size_t node = 0;
};

void cmd_inspect(InspectArgs& a) {
  DatasetHandle data;
  load_dataset(a.data, data);
  ModelHandle model;
  if (!a.checkpoint.empty()) check(nutrea_model_load(a.checkpoint.c_str(), model.out()));
  char* result = nullptr;
  check(nutrea_inspect(data.get(), model.get(), a.instance.c_str(), a.node, &result));
  const auto j = json::parse(take(result));
  if (!a.out.empty()) write_text(a.out, j.dump(2) + "\n");
  std::cout << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nutrea: subgraph question answering over knowledge graphs"};
  app.require_subcommand(1);

  GenerateArgs gen;
  nutrea_synthetic_defaults(&gen.options);
  gen.options.hops = 2;
  auto* g = app.add_subcommand("generate", "write synthetic train/dev/test splits");
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--train-size", gen.train, "training instances (2000)");
  g->add_option("--dev-size", gen.dev, "dev instances (250)");
  g->add_option("--test-size", gen.test, "test instances (250)");
  g->add_option("--hops", gen.options.hops, "path length (2)");
  g->add_option("--constraint-fraction", gen.options.constraint_fraction, "constrained share (0)")
      ->check(CLI::Range(0.0, 1.0));
  g->add_option("--unanswerable-fraction", gen.options.unanswerable_fraction,
                "share with the answers cut from the subgraph (0)")
      ->check(CLI::Range(0.0, 1.0));
  g->add_option("--nodes", gen.options.nodes_per_graph, "nodes per subgraph (30)");
  g->add_option("--relations", gen.options.num_relations, "base relations (12)");
  g->add_option("--edge-factor", gen.options.edge_factor, "triplets per node (2.0)");
  g->add_option("--seed", gen.options.seed, "seed (0); NUTREA_SEED overrides");
  g->add_flag("--force", gen.force, "overwrite existing files");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train and save the best-dev checkpoint");
  tr.run.add(t);
  t->add_option("--train", tr.train, "training split");
  t->add_option("--dev", tr.dev, "dev split");
  t->add_option("--out", tr.out, "output directory");
  t->add_flag("--force", tr.force, "overwrite an existing checkpoint");
  t->add_flag("--quiet", tr.quiet, "no per-epoch progress");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint");
  e->add_option("--checkpoint", ev.checkpoint, "model.ckpt")->required();
  e->add_option("--data", ev.data, "dataset split")->required();
  e->add_option("--out", ev.out, "per-instance JSON-lines report");
  e->add_option("--corrupt-keep", ev.corrupt_keep, "keep this fraction of triplets");
  e->add_option("--corrupt-seed", ev.corrupt_seed, "seed for --corrupt-keep (0)");
  e->add_option("--jobs", ev.jobs, "evaluation threads (1)")->check(CLI::PositiveNumber);
  e->add_flag("--force", ev.force, "overwrite an existing report");

  ProtocolArgs pr;
  auto* p = app.add_subcommand("protocol", "run an experiment grid over seeds");
  pr.run.add(p);
  p->add_option("name", pr.name, "ablation | lambda_sweep | incomplete_kg | layer_sweep")
      ->required()
      ->check(CLI::IsMember({"ablation", "lambda_sweep", "incomplete_kg", "layer_sweep"}));
  p->add_option("--train", pr.train, "training split");
  p->add_option("--dev", pr.dev, "dev split");
  p->add_option("--test", pr.test, "test split");
  p->add_option("--out", pr.out, "output directory");
  p->add_option("--seeds", pr.seeds, "seeds (0 1 2 3 4)");
  p->add_option("--jobs", pr.jobs, "cells trained concurrently (1)")->check(CLI::PositiveNumber);

  InspectArgs in;
  auto* i = app.add_subcommand("inspect", "dump one node's RF-IEF weights");
  i->add_option("--data", in.data, "dataset split")->required();
  i->add_option("--instance", in.instance, "instance id")->required();
  i->add_option("--node", in.node, "node id")->required();
  i->add_option("--checkpoint", in.checkpoint, "take the EF table from this checkpoint");
  i->add_option("--out", in.out, "also write the JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : exit_usage;
  }

  try {
    if (*g) cmd_generate(gen);
    else if (*t) cmd_train(tr);
    else if (*e) cmd_eval(ev);
    else if (*p) cmd_protocol(pr);
    else if (*i) cmd_inspect(in);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return f.code;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return exit_data;
  }
  return 0;
}
