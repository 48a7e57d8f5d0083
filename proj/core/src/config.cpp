#include "ckd/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "ckd/errors.hpp"

namespace ckd {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) {
        ++b;
    }
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) {
        --e;
    }
    return s.substr(b, e - b);
}

} // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot open config file: " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
}

KeyValueConfig KeyValueConfig::parse_string(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw schema_error("config line " + std::to_string(line_no) +
                               " is not \"key = value\": " + line);
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw schema_error("config line " + std::to_string(line_no) + " has an empty key");
        }
        cfg.values_[key] = value;
    }
    return cfg;
}

bool KeyValueConfig::has(const std::string& key) const {
    return values_.count(key) != 0;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
    values_[key] = value;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::string KeyValueConfig::require_string(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        throw config_error("missing required config key: " + key);
    }
    return it->second;
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        return fallback;
    }
    std::int64_t v = 0;
    const auto& s = it->second;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw config_error("config key " + key + " is not an integer: " + s);
    }
    return v;
}

std::uint64_t KeyValueConfig::get_uint(const std::string& key, std::uint64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        return fallback;
    }
    std::uint64_t v = 0;
    const auto& s = it->second;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw config_error("config key " + key + " is not a non-negative integer: " + s);
    }
    return v;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        return fallback;
    }
    try {
        std::size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) {
            throw std::invalid_argument("trailing characters");
        }
        return v;
    } catch (const std::exception&) {
        throw config_error("config key " + key + " is not a number: " + it->second);
    }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        return fallback;
    }
    if (it->second == "true" || it->second == "1" || it->second == "yes") {
        return true;
    }
    if (it->second == "false" || it->second == "0" || it->second == "no") {
        return false;
    }
    throw config_error("config key " + key + " is not a boolean: " + it->second);
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key,
                                                    const std::vector<double>& fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        return fallback;
    }
    std::vector<double> out;
    std::istringstream in(it->second);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) {
            continue;
        }
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw config_error("config key " + key + " has a non-numeric entry: " + item);
        }
    }
    return out;
}

std::vector<std::string> KeyValueConfig::indexed_values(const std::string& prefix) const {
    std::vector<std::string> out;
    for (std::size_t i = 0;; ++i) {
        const auto it = values_.find(prefix + "." + std::to_string(i));
        if (it == values_.end()) {
            break;
        }
        out.push_back(it->second);
    }
    return out;
}

std::string KeyValueConfig::serialize() const {
    std::string out;
    for (const auto& [key, value] : values_) {
        out += key;
        out += " = ";
        out += value;
        out += '\n';
    }
    return out;
}

} // namespace ckd
