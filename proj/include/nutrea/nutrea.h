/* C interface to the nutrea library. Every function returns a status code;
 * on failure nutrea_last_error() describes the problem (per thread).
 * Strings returned through char** are owned by the caller and released with
 * nutrea_string_free. */
#ifndef NUTREA_NUTREA_H
#define NUTREA_NUTREA_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nutrea_status {
  NUTREA_OK = 0,
  NUTREA_ERR_USAGE = 1,
  NUTREA_ERR_DATA = 2,
  NUTREA_ERR_IO = 3,
  NUTREA_ERR_DIVERGENCE = 4,
  NUTREA_ERR_INTERNAL = 5
} nutrea_status;

typedef struct nutrea_config nutrea_config;
typedef struct nutrea_dataset nutrea_dataset;
typedef struct nutrea_model nutrea_model;

const char* nutrea_last_error(void);
void nutrea_string_free(char* s);

/* --- run configuration --------------------------------------------------- */

nutrea_status nutrea_config_new(nutrea_config** out);
/* key = value file; unknown keys are rejected. */
nutrea_status nutrea_config_load(const char* path, nutrea_config** out);
nutrea_status nutrea_config_set(nutrea_config* config, const char* key, const char* value);
nutrea_status nutrea_config_get(const nutrea_config* config, const char* key, char** value);
nutrea_status nutrea_config_to_json(const nutrea_config* config, char** json);
nutrea_status nutrea_config_hash(const nutrea_config* config, char** hex);
/* Writes config.json (with its hash) into dir. */
nutrea_status nutrea_config_write(const nutrea_config* config, const char* dir);
void nutrea_config_free(nutrea_config* config);

/* --- datasets ------------------------------------------------------------ */

typedef struct nutrea_synthetic_options {
  size_t num_instances;
  size_t nodes_per_graph;
  size_t num_relations;
  double edge_factor;
  size_t hops;
  double constraint_fraction;
  double unanswerable_fraction;
  uint64_t seed;
} nutrea_synthetic_options;

void nutrea_synthetic_defaults(nutrea_synthetic_options* options);
nutrea_status nutrea_generate(const nutrea_synthetic_options* options, nutrea_dataset** out);
nutrea_status nutrea_dataset_load(const char* path, nutrea_dataset** out);
nutrea_status nutrea_dataset_write(const nutrea_dataset* dataset, const char* path);
/* Instances [begin, end) under a new split name. */
nutrea_status nutrea_dataset_slice(const nutrea_dataset* dataset, size_t begin, size_t end,
                                   const char* split, nutrea_dataset** out);
nutrea_status nutrea_dataset_corrupt(const nutrea_dataset* dataset, double keep_fraction,
                                     uint64_t seed, nutrea_dataset** out);
size_t nutrea_dataset_size(const nutrea_dataset* dataset);
void nutrea_dataset_free(nutrea_dataset* dataset);

/* --- training and evaluation --------------------------------------------- */

/* Receives one JSON object per finished epoch. */
typedef void (*nutrea_epoch_fn)(const char* record_json, void* user);

/* history receives a JSON array of epoch records (may be NULL). */
nutrea_status nutrea_train(const nutrea_config* config, const nutrea_dataset* train,
                           const nutrea_dataset* dev, nutrea_epoch_fn on_epoch, void* user,
                           nutrea_model** out, char** history);
nutrea_status nutrea_model_save(const nutrea_model* model, const char* path);
nutrea_status nutrea_model_load(const char* path, nutrea_model** out);
void nutrea_model_free(nutrea_model* model);

typedef struct nutrea_metrics {
  double hit_at_1;
  double f1;
  size_t instances;
} nutrea_metrics;

/* per_instance receives JSON-lines, one row per instance (may be NULL). */
nutrea_status nutrea_evaluate(const nutrea_model* model, const nutrea_dataset* dataset,
                              size_t jobs, nutrea_metrics* metrics, char** per_instance);

/* Receives each results row as it is appended. */
typedef void (*nutrea_row_fn)(const char* row_json, void* user);

/* protocol: ablation | lambda_sweep | incomplete_kg | layer_sweep. summary
 * receives {"rows": [...], "cells": [...], "computed": n}. */
nutrea_status nutrea_protocol_run(const char* protocol, const nutrea_config* config,
                                  const nutrea_dataset* train, const nutrea_dataset* dev,
                                  const nutrea_dataset* test, const uint64_t* seeds,
                                  size_t num_seeds, const char* results_path, size_t jobs,
                                  nutrea_row_fn on_row, void* user, char** summary);

/* RF-IEF weights of one node. The EF table comes from `model` when given,
 * otherwise from `dataset` itself. */
nutrea_status nutrea_inspect(const nutrea_dataset* dataset, const nutrea_model* model,
                             const char* instance_id, size_t node, char** json);

#ifdef __cplusplus
}
#endif

#endif
