#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace probshift {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

struct FileDigest {
    std::string path;
    std::string sha256;
};

/// Provenance record written next to every CLI output. Replaying `argv` with the same
/// inputs reproduces the outputs byte for byte.
struct RunManifest {
    std::string command;
    std::vector<std::string> argv;  // without the program name
    nlohmann::json flags = nlohmann::json::object();
    nlohmann::json seeds = nlohmann::json::object();
    std::vector<FileDigest> inputs;
    std::vector<FileDigest> outputs;
    std::string tool_version;
    double wall_time_s = 0.0;

    void add_input(const std::filesystem::path& p);
    void add_output(const std::filesystem::path& p);
};

nlohmann::json manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& doc);

/// `<dir>/<stem><suffix>`, e.g. forest.json -> forest.manifest.json.
std::filesystem::path sibling_path(const std::filesystem::path& p, const std::string& suffix);

}  // namespace probshift
