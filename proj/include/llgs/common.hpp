#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace llgs {

// Exit-code taxonomy used by the CLI: usage=1, data=2, numerical=3.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

// Level comes from LLGS_LOG={error|info|debug}; default info.
LogLevel log_level();
void log_message(LogLevel level, const std::string& msg);

inline void log_error(const std::string& msg) { log_message(LogLevel::kError, msg); }
inline void log_info(const std::string& msg) { log_message(LogLevel::kInfo, msg); }
inline void log_debug(const std::string& msg) { log_message(LogLevel::kDebug, msg); }

}  // namespace llgs
