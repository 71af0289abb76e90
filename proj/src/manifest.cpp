#include "probshift/manifest.hpp"

#include <openssl/evp.h>

#include <memory>

#include "probshift/error.hpp"
#include "probshift/forest_json.hpp"

namespace probshift {

using nlohmann::json;

std::string sha256_hex(const std::string& bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
        throw Error("SHA-256 computation failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_text_file(path)); }

void RunManifest::add_input(const std::filesystem::path& p) { inputs.push_back({p.string(), sha256_file(p)}); }

void RunManifest::add_output(const std::filesystem::path& p) { outputs.push_back({p.string(), sha256_file(p)}); }

namespace {

json digests_to_json(const std::vector<FileDigest>& v) {
    json out = json::array();
    for (const auto& d : v) out.push_back({{"path", d.path}, {"sha256", d.sha256}});
    return out;
}

std::vector<FileDigest> digests_from_json(const json& j) {
    std::vector<FileDigest> out;
    for (const auto& d : j) out.push_back({d.at("path").get<std::string>(), d.at("sha256").get<std::string>()});
    return out;
}

}  // namespace

json manifest_to_json(const RunManifest& m) {
    return {{"command", m.command},   {"argv", m.argv},
            {"flags", m.flags},       {"seeds", m.seeds},
            {"inputs", digests_to_json(m.inputs)}, {"outputs", digests_to_json(m.outputs)},
            {"tool_version", m.tool_version}, {"wall_time_s", m.wall_time_s}};
}

RunManifest manifest_from_json(const json& doc) {
    RunManifest m;
    try {
        m.command = doc.at("command").get<std::string>();
        m.argv = doc.at("argv").get<std::vector<std::string>>();
        m.flags = doc.value("flags", json::object());
        m.seeds = doc.value("seeds", json::object());
        m.inputs = digests_from_json(doc.at("inputs"));
        m.outputs = digests_from_json(doc.at("outputs"));
        m.tool_version = doc.value("tool_version", std::string());
        m.wall_time_s = doc.value("wall_time_s", 0.0);
    } catch (const json::exception& ex) {
        throw ParseError(std::string("manifest: ") + ex.what());
    }
    return m;
}

std::filesystem::path sibling_path(const std::filesystem::path& p, const std::string& suffix) {
    return p.parent_path() / (p.stem().string() + suffix);
}

}  // namespace probshift
