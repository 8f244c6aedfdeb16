#include "nutrea/nutrea.h"

#include <algorithm>
#include <cstring>
#include <string>

#include "nutrea/checkpoint.hpp"
#include "nutrea/config.hpp"
#include "nutrea/error.hpp"
#include "nutrea/rfief.hpp"
#include "nutrea/train.hpp"

struct nutrea_config {
  nutrea::RunConfig value;
};

struct nutrea_dataset {
  nutrea::Dataset value;
};

struct nutrea_model {
  nutrea::Model value;
};

namespace {

using nlohmann::json;

thread_local std::string g_last_error;

nutrea_status status_for(nutrea::Error::Kind kind) {
  using K = nutrea::Error::Kind;
  switch (kind) {
    case K::usage: return NUTREA_ERR_USAGE;
    case K::io: return NUTREA_ERR_IO;
    case K::divergence: return NUTREA_ERR_DIVERGENCE;
    case K::data:
    case K::validation:
    case K::dimension:
    case K::contract: return NUTREA_ERR_DATA;
  }
  return NUTREA_ERR_INTERNAL;
}

template <typename Fn>
nutrea_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return NUTREA_OK;
  } catch (const nutrea::Error& e) {
    g_last_error = e.what();
    return status_for(e.kind());
  } catch (const json::exception& e) {
    g_last_error = e.what();
    return NUTREA_ERR_DATA;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return NUTREA_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return NUTREA_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return NUTREA_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw nutrea::UsageError(std::string(what) + " must not be null");
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* nutrea_last_error(void) { return g_last_error.c_str(); }

void nutrea_string_free(char* s) { std::free(s); }

// --- config -----------------------------------------------------------------

nutrea_status nutrea_config_new(nutrea_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new nutrea_config{};
  });
}

nutrea_status nutrea_config_load(const char* path, nutrea_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new nutrea_config{nutrea::load_run_config(path)};
  });
}

nutrea_status nutrea_config_set(nutrea_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    config->value.set(key, value);
  });
}

nutrea_status nutrea_config_get(const nutrea_config* config, const char* key, char** value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    const json j = config->value.to_json();
    const std::string k = key;
    for (const char* section : {"model", "train", "data"}) {
      if (j.at(section).contains(k)) {
        const auto& v = j.at(section).at(k);
        *value = copy_string(v.is_string() ? v.get<std::string>() : v.dump());
        return;
      }
    }
    if (k == "output") {
      *value = copy_string(config->value.output);
      return;
    }
    throw nutrea::UsageError("unknown config key '" + k + "'");
  });
}

nutrea_status nutrea_config_to_json(const nutrea_config* config, char** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    *out = copy_string(config->value.to_json().dump());
  });
}

nutrea_status nutrea_config_hash(const nutrea_config* config, char** hex) {
  return guarded([&] {
    require(config, "config");
    require(hex, "hex");
    *hex = copy_string(config->value.hash());
  });
}

nutrea_status nutrea_config_write(const nutrea_config* config, const char* dir) {
  return guarded([&] {
    require(config, "config");
    require(dir, "dir");
    nutrea::write_run_config(config->value, dir);
  });
}

void nutrea_config_free(nutrea_config* config) { delete config; }

// --- datasets ---------------------------------------------------------------

void nutrea_synthetic_defaults(nutrea_synthetic_options* options) {
  if (options == nullptr) return;
  const nutrea::SyntheticConfig d;
  *options = {d.num_instances, d.nodes_per_graph,    d.num_relations,         d.edge_factor,
              d.hops,          d.constraint_fraction, d.unanswerable_fraction, d.seed};
}

nutrea_status nutrea_generate(const nutrea_synthetic_options* options, nutrea_dataset** out) {
  return guarded([&] {
    require(options, "options");
    require(out, "out");
    nutrea::SyntheticConfig c;
    c.num_instances = options->num_instances;
    c.nodes_per_graph = options->nodes_per_graph;
    c.num_relations = options->num_relations;
    c.edge_factor = options->edge_factor;
    c.hops = options->hops;
    c.constraint_fraction = options->constraint_fraction;
    c.unanswerable_fraction = options->unanswerable_fraction;
    c.seed = options->seed;
    *out = new nutrea_dataset{nutrea::generate_synthetic(c).dataset};
  });
}

nutrea_status nutrea_dataset_load(const char* path, nutrea_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new nutrea_dataset{nutrea::load_dataset(path)};
  });
}

nutrea_status nutrea_dataset_write(const nutrea_dataset* dataset, const char* path) {
  return guarded([&] {
    require(dataset, "dataset");
    require(path, "path");
    nutrea::write_dataset(dataset->value, path);
  });
}

nutrea_status nutrea_dataset_slice(const nutrea_dataset* dataset, size_t begin, size_t end,
                                   const char* split, nutrea_dataset** out) {
  return guarded([&] {
    require(dataset, "dataset");
    require(split, "split");
    require(out, "out");
    const auto& src = dataset->value;
    if (begin > end || end > src.instances.size()) {
      throw nutrea::UsageError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                               ") out of range for " + std::to_string(src.instances.size()) +
                               " instances");
    }
    nutrea::Dataset d{{src.instances.begin() + static_cast<std::ptrdiff_t>(begin),
                       src.instances.begin() + static_cast<std::ptrdiff_t>(end)},
                      src.relation_vocab,
                      src.token_vocab,
                      split};
    *out = new nutrea_dataset{std::move(d)};
  });
}

nutrea_status nutrea_dataset_corrupt(const nutrea_dataset* dataset, double keep_fraction,
                                     uint64_t seed, nutrea_dataset** out) {
  return guarded([&] {
    require(dataset, "dataset");
    require(out, "out");
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
      throw nutrea::UsageError("keep fraction must lie in (0, 1]");
    }
    *out = new nutrea_dataset{nutrea::corrupt_kg(dataset->value, keep_fraction, seed)};
  });
}

size_t nutrea_dataset_size(const nutrea_dataset* dataset) {
  return dataset == nullptr ? 0 : dataset->value.instances.size();
}

void nutrea_dataset_free(nutrea_dataset* dataset) { delete dataset; }

// --- training ---------------------------------------------------------------

nutrea_status nutrea_train(const nutrea_config* config, const nutrea_dataset* train,
                           const nutrea_dataset* dev, nutrea_epoch_fn on_epoch, void* user,
                           nutrea_model** out, char** history) {
  return guarded([&] {
    require(config, "config");
    require(train, "train");
    require(dev, "dev");
    require(out, "out");
    config->value.validate();
    nutrea::EpochCallback cb;
    if (on_epoch != nullptr) {
      cb = [&](const nutrea::EpochRecord& r) { on_epoch(r.to_json().dump().c_str(), user); };
    }
    auto result = nutrea::train(train->value, dev->value, config->value.model, config->value.train, cb);
    if (history != nullptr) {
      json h = json::array();
      for (const auto& r : result.history) h.push_back(r.to_json());
      *history = copy_string(h.dump());
    }
    *out = new nutrea_model{std::move(result.model)};
  });
}

nutrea_status nutrea_model_save(const nutrea_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    nutrea::save_checkpoint(model->value, path);
  });
}

nutrea_status nutrea_model_load(const char* path, nutrea_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new nutrea_model{nutrea::load_checkpoint(path)};
  });
}

void nutrea_model_free(nutrea_model* model) { delete model; }

nutrea_status nutrea_evaluate(const nutrea_model* model, const nutrea_dataset* dataset, size_t jobs,
                              nutrea_metrics* metrics, char** per_instance) {
  return guarded([&] {
    require(model, "model");
    require(dataset, "dataset");
    const auto report = nutrea::evaluate(model->value, dataset->value, std::max<size_t>(1, jobs));
    if (metrics != nullptr) *metrics = {report.hit_at_1, report.f1, report.per_instance.size()};
    if (per_instance != nullptr) {
      std::string lines;
      for (const auto& r : report.per_instance) {
        json row = {{"id", r.id},         {"hit", r.hit}, {"precision", r.precision},
                    {"recall", r.recall}, {"f1", r.f1},   {"predicted", r.predicted}};
        lines += row.dump();
        lines += '\n';
      }
      *per_instance = copy_string(lines);
    }
  });
}

nutrea_status nutrea_protocol_run(const char* protocol, const nutrea_config* config,
                                  const nutrea_dataset* train, const nutrea_dataset* dev,
                                  const nutrea_dataset* test, const uint64_t* seeds,
                                  size_t num_seeds, const char* results_path, size_t jobs,
                                  nutrea_row_fn on_row, void* user, char** summary) {
  return guarded([&] {
    require(protocol, "protocol");
    require(config, "config");
    require(train, "train");
    require(dev, "dev");
    require(test, "test");
    require(results_path, "results_path");
    if (num_seeds > 0) require(seeds, "seeds");
    config->value.validate();
    const auto p = nutrea::parse_protocol(protocol);
    std::function<void(const nutrea::ProtocolRow&)> cb;
    if (on_row != nullptr) {
      cb = [&](const nutrea::ProtocolRow& r) { on_row(r.to_json().dump().c_str(), user); };
    }
    const auto outcome = nutrea::run_protocol(
        p, config->value.model, config->value.train, {&train->value, &dev->value, &test->value},
        std::vector<std::uint64_t>(seeds, seeds + num_seeds), results_path,
        std::max<size_t>(1, jobs), cb);
    if (summary != nullptr) {
      json rows = json::array(), cells = json::array();
      for (const auto& r : outcome.rows) rows.push_back(r.to_json());
      for (const auto& c : outcome.summary) {
        cells.push_back({{"cell", c.cell},
                         {"runs", c.runs},
                         {"dev_hit_at_1", c.dev_hit_at_1},
                         {"dev_f1", c.dev_f1},
                         {"test_hit_at_1", c.test_hit_at_1},
                         {"test_f1", c.test_f1}});
      }
      *summary = copy_string(
          json{{"protocol", protocol}, {"rows", rows}, {"cells", cells}, {"computed", outcome.computed}}
              .dump());
    }
  });
}

nutrea_status nutrea_inspect(const nutrea_dataset* dataset, const nutrea_model* model,
                             const char* instance_id, size_t node, char** out) {
  return guarded([&] {
    require(dataset, "dataset");
    require(instance_id, "instance_id");
    require(out, "out");
    const auto& ds = dataset->value;
    const auto it = std::find_if(ds.instances.begin(), ds.instances.end(),
                                 [&](const auto& inst) { return inst.id == instance_id; });
    if (it == ds.instances.end()) {
      throw nutrea::ValidationError(std::string("no instance with id '") + instance_id + "'");
    }
    const bool inverse = model ? model->value.config().inverse_edges : true;
    const auto& relations = model ? model->value.relations() : ds.relation_vocab;
    if (!(relations == ds.relation_vocab)) {
      throw nutrea::ValidationError("dataset relation vocabulary does not match the checkpoint's");
    }
    const nutrea::EfTable ef = model ? model->value.ef_table() : nutrea::entity_frequency(ds, inverse);
    const bool per_instance =
        model && model->value.config().ief_numerator == nutrea::IefNumerator::instance;
    const auto ief = per_instance ? nutrea::inverse_entity_frequency(ef, it->num_nodes)
                                  : nutrea::inverse_entity_frequency(ef);

    const nutrea::AugmentedGraph graph(*it, relations, inverse);
    const auto rf = nutrea::relation_frequency(graph);
    const auto report = nutrea::inspect_weights(rf, ief, node);

    auto pairs = [&](const std::vector<std::pair<nutrea::RelationId, nutrea::Real>>& v) {
      json a = json::array();
      for (const auto& [r, w] : v) a.push_back({{"relation", relations.name(r)}, {"weight", w}});
      return a;
    };
    json counts = json::array();
    for (nutrea::RelationId r = 0; r < rf.num_relations; ++r) {
      if (rf.at(node, r) > 0) {
        counts.push_back({{"relation", relations.name(r)},
                          {"count", rf.at(node, r)},
                          {"ief", ief.ief[r]},
                          {"rf_ief", rf.at(node, r) * ief.ief[r]}});
      }
    }
    std::vector<nutrea::RelationId> order(ef.ef.size());
    for (std::size_t r = 0; r < order.size(); ++r) order[r] = r;
    std::stable_sort(order.begin(), order.end(),
                     [&](auto a, auto b) { return ef.ef[a] > ef.ef[b]; });
    json ranking = json::array();
    for (auto r : order) {
      ranking.push_back({{"relation", relations.name(r)}, {"ef", ef.ef[r]}, {"ief", ief.ief[r]}});
    }
    const json result = {{"instance", it->id},
                         {"node", node},
                         {"weights", pairs(report.weights)},
                         {"suppressed", pairs(report.suppressed)},
                         {"incident", counts},
                         {"ef_total_nodes", ef.total_nodes},
                         {"ef_ranking", ranking}};
    *out = copy_string(result.dump());
  });
}

}  // extern "C"
