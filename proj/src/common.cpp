#include "llgs/common.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace llgs {

LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("LLGS_LOG");
    if (env == nullptr) return LogLevel::kInfo;
    if (std::strcmp(env, "error") == 0) return LogLevel::kError;
    if (std::strcmp(env, "debug") == 0) return LogLevel::kDebug;
    return LogLevel::kInfo;
  }();
  return level;
}

void log_message(LogLevel level, const std::string& msg) {
  if (level > log_level()) return;
  const char* tag = level == LogLevel::kError ? "error"
                    : level == LogLevel::kInfo ? "info"
                                               : "debug";
  std::fprintf(stderr, "[llgs %s] %s\n", tag, msg.c_str());
}

}  // namespace llgs
