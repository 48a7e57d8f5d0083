#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ckd {

// Flat "key = value" configuration with # comments; nested keys use dotted
// names (teacher.layers = 4). Later assignments win, which is how CLI flag
// overrides are layered on top of a file.
class KeyValueConfig {
  public:
    KeyValueConfig() = default;

    static KeyValueConfig parse_file(const std::filesystem::path& path);
    static KeyValueConfig parse_string(const std::string& text);

    bool has(const std::string& key) const;
    void set(const std::string& key, const std::string& value);

    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::string require_string(const std::string& key) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& fallback) const;

    // Keys matching "prefix.N" in ascending N, for repeated entries.
    std::vector<std::string> indexed_values(const std::string& prefix) const;

    const std::map<std::string, std::string>& values() const { return values_; }

    // Canonical serialization (sorted keys), used for hashing and manifests.
    std::string serialize() const;

  private:
    std::map<std::string, std::string> values_;
};

} // namespace ckd
