#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "probshift/forest.hpp"

namespace probshift {

nlohmann::json feature_to_json(const FeatureMeta& f);
FeatureMeta feature_from_json(const nlohmann::json& j);

/// Canonical forest document (see README for the schema).
nlohmann::json forest_to_json(const Forest& forest);

/// Parses and validates a forest document. Errors name the offending tree/node.
Forest forest_from_json(const nlohmann::json& doc);

Forest load_forest(const std::filesystem::path& path);
void save_forest(const Forest& forest, const std::filesystem::path& path);

/// Reads a whole file; throws InputError if it cannot be opened.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Parses JSON text, turning nlohmann errors into ParseError with the byte offset.
nlohmann::json parse_json(const std::string& text, const std::string& origin);

}  // namespace probshift
