#include "ckd/manifest.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "ckd/errors.hpp"
#include "ckd/version.hpp"

namespace ckd {

std::uint64_t fnv1a64(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string fnv1a64_hex(const std::string& data) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(data.data(), data.size())));
    return buf;
}

std::string hash_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw io_error("cannot hash missing file: " + path.string());
    }
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fnv1a64_hex(content);
}

std::string RunManifest::config_hash() const {
    std::string flat;
    for (const auto& [k, v] : config) {
        flat += k;
        flat += '=';
        flat += v;
        flat += '\n';
    }
    return fnv1a64_hex(flat);
}

KeyValueConfig RunManifest::config_as_kv() const {
    KeyValueConfig kv;
    for (const auto& [k, v] : config) {
        kv.set(k, v);
    }
    return kv;
}

void RunManifest::save(const std::filesystem::path& path) const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["version"] = version.empty() ? kVersion : version;
    j["seed"] = seed;
    j["config_hash"] = config_hash();
    j["config"] = config;
    j["input_hashes"] = input_hashes;
    j["output_hashes"] = output_hashes;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw io_error("cannot write manifest: " + path.string());
    }
    out << j.dump(2) << '\n';
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw missing_artifact_error("manifest not found: " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw schema_error("manifest is not valid JSON: " + std::string(e.what()));
    }
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.version = j.value("version", std::string(kVersion));
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config = j.at("config").get<std::map<std::string, std::string>>();
    m.input_hashes = j.value("input_hashes", std::map<std::string, std::string>{});
    m.output_hashes = j.value("output_hashes", std::map<std::string, std::string>{});
    return m;
}

} // namespace ckd
