#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "nutrea/model.hpp"

namespace nutrea {

inline constexpr const char* checkpoint_format = "nutrea-ckpt-v1";

/// Parameters are stored as little-endian float32, base64-encoded, keyed by
/// their stable names. Vocabularies and the EF table travel with them.
nlohmann::json checkpoint_json(const Model& model);
Model model_from_checkpoint(const nlohmann::json& j);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
/// Throws DataError on a wrong format tag, a missing tensor or a shape that
/// disagrees with the stored config.
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace nutrea
