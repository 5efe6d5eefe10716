#pragma once

#include <cstdlib>
#include <cstring>
#include <iostream>
#include <string>

namespace evstream {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Verbosity comes from the EVSTREAM_LOG environment variable
// (error|warn|info|debug). Default: warn.
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("EVSTREAM_LOG");
    if (env == nullptr) return LogLevel::kWarn;
    if (std::strcmp(env, "error") == 0) return LogLevel::kError;
    if (std::strcmp(env, "info") == 0) return LogLevel::kInfo;
    if (std::strcmp(env, "debug") == 0) return LogLevel::kDebug;
    return LogLevel::kWarn;
  }();
  return level;
}

inline void log_msg(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::cerr << "evstream [" << names[static_cast<int>(level)] << "] " << msg << '\n';
}

}  // namespace evstream
