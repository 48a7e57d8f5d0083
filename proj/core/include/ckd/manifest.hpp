#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "ckd/config.hpp"

namespace ckd {

// FNV-1a 64-bit, as a 16-hex-digit string; used for content provenance.
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::string fnv1a64_hex(const std::string& data);
std::string hash_file(const std::filesystem::path& path);

// Everything needed to re-execute a subcommand run and check its outputs:
// the resolved configuration, the seed, and content hashes of all inputs
// and data outputs. Timing lives in separate files and is never hashed.
struct RunManifest {
    std::string command;
    std::string version;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> config;        // resolved key -> value
    std::map<std::string, std::string> input_hashes;  // path -> hash
    std::map<std::string, std::string> output_hashes; // filename -> hash

    std::string config_hash() const;
    KeyValueConfig config_as_kv() const;

    void save(const std::filesystem::path& path) const;
    static RunManifest load(const std::filesystem::path& path);
};

} // namespace ckd
