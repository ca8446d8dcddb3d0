#pragma once

#include <cstdlib>
#include <iostream>
#include <string>

namespace feudal {

enum class LogLevel { error = 0, info = 1, debug = 2 };

/// Reads FUN_LOG_LEVEL ({error, info, debug}) once; defaults to info.
inline LogLevel log_level() {
  static LogLevel level = [] {
    const char* v = std::getenv("FUN_LOG_LEVEL");
    if (!v) return LogLevel::info;
    std::string s(v);
    if (s == "error") return LogLevel::error;
    if (s == "debug") return LogLevel::debug;
    return LogLevel::info;
  }();
  return level;
}

// Logging goes to stderr so command output and metrics files stay clean.
inline void log_error(const std::string& msg) {
  std::cerr << "[error] " << msg << "\n";
}

inline void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::info) std::cerr << "[info] " << msg << "\n";
}

inline void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::debug) std::cerr << "[debug] " << msg << "\n";
}

}  // namespace feudal
