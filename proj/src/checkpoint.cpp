#include "nutrea/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "nutrea/error.hpp"

namespace nutrea {

using json = nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

std::string encode_floats(std::span<const Real> values) {
  std::vector<float> f(values.begin(), values.end());
  const auto* bytes = reinterpret_cast<const unsigned char*>(f.data());
  const std::size_t n = f.size() * sizeof(float);
  std::string out(4 * ((n + 2) / 3), '\0');
  const int written = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes,
                                      static_cast<int>(n));
  out.resize(static_cast<std::size_t>(written));
  return out;
}

std::vector<Real> decode_floats(const std::string& text, std::size_t count, const std::string& name) {
  if (text.size() % 4 != 0) throw DataError("checkpoint tensor '" + name + "' is not valid base64");
  std::vector<unsigned char> bytes(text.size() / 4 * 3);
  const int n = EVP_DecodeBlock(bytes.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw DataError("checkpoint tensor '" + name + "' is not valid base64");
  // EVP_DecodeBlock keeps the padding bytes; trim to the declared size.
  if (static_cast<std::size_t>(n) < count * sizeof(float)) {
    throw DataError("checkpoint tensor '" + name + "' holds fewer values than its shape");
  }
  std::vector<float> f(count);
  std::memcpy(f.data(), bytes.data(), count * sizeof(float));
  return {f.begin(), f.end()};
}

}  // namespace

json checkpoint_json(const Model& model) {
  json tensors = json::object();
  for (const auto& [name, t] : model.params().named()) {
    tensors[name] = {{"shape", t.shape()}, {"data", encode_floats(t.values())}};
  }
  return {{"format", checkpoint_format},
          {"config", model.config().to_json()},
          {"relations", model.relations().base_names()},
          {"tokens", model.tokens().tokens()},
          {"ef_table", model.ef_table().to_json(model.relations())},
          {"tensors", tensors}};
}

Model model_from_checkpoint(const json& j) {
  if (!j.is_object() || !j.contains("format") || j["format"] != checkpoint_format) {
    throw DataError(std::string("not a checkpoint: expected format tag '") + checkpoint_format + "'");
  }
  try {
    const auto config = ModelConfig::from_json(j.at("config"));
    RelationVocab relations(j.at("relations").get<std::vector<std::string>>());
    TokenVocab tokens(j.at("tokens").get<std::vector<std::string>>());
    EfTable ef = EfTable::from_json(j.at("ef_table"), relations);
    // A freshly initialised model supplies the expected names and shapes.
    Model model(config, relations, tokens, ef, 0);
    const auto& stored = j.at("tensors");
    for (auto& [name, t] : model.mutable_params().named()) {
      if (!stored.contains(name)) throw DataError("checkpoint is missing tensor '" + name + "'");
      const auto& entry = stored.at(name);
      const auto shape = entry.at("shape").get<Shape>();
      if (shape != t.shape()) {
        throw DataError("checkpoint tensor '" + name + "' has shape " + shape_string(shape) +
                        ", config implies " + shape_string(t.shape()));
      }
      const auto values = decode_floats(entry.at("data").get<std::string>(), t.size(), name);
      auto dst = t.mutable_values();
      std::copy(values.begin(), values.end(), dst.begin());
    }
    if (stored.size() != model.params().named().size()) {
      throw DataError("checkpoint holds tensors the config does not use");
    }
    return model;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << checkpoint_json(model).dump() << '\n';
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path.string() + " is not JSON: " + e.what());
  }
  return model_from_checkpoint(j);
}

}  // namespace nutrea
