#include "nutrea/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>

#include "nutrea/error.hpp"

namespace nutrea {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw UsageError("config key '" + key + "': cannot parse '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw UsageError("config key '" + key + "': expected true or false, got '" + value + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"dim", [](RunConfig& c, auto& k, auto& v) { c.model.dim = parse_number<std::size_t>(k, v); }},
      {"layers", [](RunConfig& c, auto& k, auto& v) { c.model.layers = parse_number<std::size_t>(k, v); }},
      {"subtree_depth",
       [](RunConfig& c, auto& k, auto& v) { c.model.subtree_depth = parse_number<std::size_t>(k, v); }},
      {"num_expansion",
       [](RunConfig& c, auto& k, auto& v) { c.model.num_expansion = parse_number<std::size_t>(k, v); }},
      {"num_backup",
       [](RunConfig& c, auto& k, auto& v) { c.model.num_backup = parse_number<std::size_t>(k, v); }},
      {"lambda", [](RunConfig& c, auto& k, auto& v) { c.model.lambda = parse_number<double>(k, v); }},
      {"position_embeddings",
       [](RunConfig& c, auto& k, auto& v) { c.model.position_embeddings = parse_bool(k, v); }},
      {"backup", [](RunConfig& c, auto& k, auto& v) { c.model.backup = parse_bool(k, v); }},
      {"rfief", [](RunConfig& c, auto& k, auto& v) { c.model.rfief = parse_bool(k, v); }},
      {"inverse_edges", [](RunConfig& c, auto& k, auto& v) { c.model.inverse_edges = parse_bool(k, v); }},
      {"inference_iterations",
       [](RunConfig& c, auto& k, auto& v) {
         c.model.inference_iterations = parse_number<std::size_t>(k, v);
       }},
      {"ief_numerator",
       [](RunConfig& c, auto& k, auto& v) {
         if (v == "corpus") c.model.ief_numerator = IefNumerator::corpus;
         else if (v == "instance") c.model.ief_numerator = IefNumerator::instance;
         else throw UsageError("config key '" + k + "': expected corpus or instance");
       }},
      {"learning_rate",
       [](RunConfig& c, auto& k, auto& v) { c.train.learning_rate = parse_number<double>(k, v); }},
      {"lr_decay", [](RunConfig& c, auto& k, auto& v) { c.train.lr_decay = parse_number<double>(k, v); }},
      {"epochs", [](RunConfig& c, auto& k, auto& v) { c.train.epochs = parse_number<std::size_t>(k, v); }},
      {"batch_size",
       [](RunConfig& c, auto& k, auto& v) { c.train.batch_size = parse_number<std::size_t>(k, v); }},
      {"seed", [](RunConfig& c, auto& k, auto& v) { c.train.seed = parse_number<std::uint64_t>(k, v); }},
      {"train", [](RunConfig& c, auto&, auto& v) { c.train_path = v; }},
      {"dev", [](RunConfig& c, auto&, auto& v) { c.dev_path = v; }},
      {"test", [](RunConfig& c, auto&, auto& v) { c.test_path = v; }},
      {"output", [](RunConfig& c, auto&, auto& v) { c.output = v; }},
  };
  return table;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw UsageError("unknown config key '" + key + "'");
  it->second(*this, key, value);
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : setters()) out.push_back(k);
  return out;
}

nlohmann::json RunConfig::to_json() const {
  return {{"model", model.to_json()},
          {"train", train.to_json()},
          {"data", {{"train", train_path}, {"dev", dev_path}, {"test", test_path}}},
          {"output", output}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.model = ModelConfig::from_json(j.at("model"));
    c.train = TrainConfig::from_json(j.at("train"));
    const auto& d = j.at("data");
    c.train_path = d.at("train");
    c.dev_path = d.at("dev");
    c.test_path = d.at("test");
    c.output = j.at("output");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed run config: ") + e.what());
  }
  return c;
}

std::string RunConfig::hash() const { return config_hash(to_json()); }

void RunConfig::validate() const {
  try {
    model.validate();
    train.validate();
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  RunConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    try {
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const UsageError& e) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

void write_run_config(const RunConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json j = config.to_json();
  j["hash"] = config.hash();
  std::ofstream out(dir / "config.json", std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / "config.json").string());
  out << j.dump(2) << '\n';
}

}  // namespace nutrea
