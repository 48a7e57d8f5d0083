#pragma once

#include <cstdlib>
#include <iostream>
#include <string>

namespace ckd::tools {

// Verbosity from CKD_LOG={error,info,debug}; data never goes to stderr.
enum class LogLevel { error = 0, info = 1, debug = 2 };

inline LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("CKD_LOG");
        if (!env) {
            return LogLevel::info;
        }
        const std::string s(env);
        if (s == "error") {
            return LogLevel::error;
        }
        if (s == "debug") {
            return LogLevel::debug;
        }
        return LogLevel::info;
    }();
    return level;
}

inline void log_error(const std::string& msg) {
    std::cerr << "[error] " << msg << "\n";
}

inline void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::info) {
        std::cerr << "[info] " << msg << "\n";
    }
}

inline void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::debug) {
        std::cerr << "[debug] " << msg << "\n";
    }
}

} // namespace ckd::tools
