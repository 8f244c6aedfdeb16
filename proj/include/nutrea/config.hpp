#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "nutrea/model.hpp"
#include "nutrea/train.hpp"

namespace nutrea {

/// Everything a run depends on. Config files are `key = value` lines; `#`
/// starts a comment. Keys are the ones listed by `RunConfig::keys()`.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string train_path;
  std::string dev_path;
  std::string test_path;
  std::string output;

  /// Applies one key/value pair; UsageError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  static std::vector<std::string> keys();

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  std::string hash() const;
  void validate() const;
};

RunConfig load_run_config(const std::filesystem::path& path);
/// Writes `config.json` into `dir`.
void write_run_config(const RunConfig& config, const std::filesystem::path& dir);

}  // namespace nutrea
