#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace locnav {

// Base for everything thrown by this library. what() carries the offending
// file/field/line where one exists.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (config files, checkpoints, CSV).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Structurally valid input with out-of-range or inconsistent content.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Broken internal precondition (shape mismatch, reused autodiff graph, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Rejection sampling gave up (e.g. fully blocked spawn region).
class SamplingExhausted : public Error {
 public:
  using Error::Error;
};

// Particle filter collapsed (all weights underflowed to zero).
class DegenerateBelief : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Optimization blew up (non-finite loss or gradients); carries a diagnostic
// dump of the offending batch.
class NumericalFault : public Error {
 public:
  using Error::Error;
};

enum class LogLevel { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kOff = 4 };

namespace detail {
inline LogLevel parse_log_level(const char* s) {
  if (s == nullptr) return LogLevel::kWarn;
  std::string v(s);
  if (v == "debug") return LogLevel::kDebug;
  if (v == "info") return LogLevel::kInfo;
  if (v == "warn") return LogLevel::kWarn;
  if (v == "error") return LogLevel::kError;
  if (v == "off") return LogLevel::kOff;
  return LogLevel::kWarn;
}
}  // namespace detail

// Level comes from the LOCNAV_LOG env var (debug|info|warn|error|off), read once.
inline LogLevel log_level() {
  static const LogLevel level = detail::parse_log_level(std::getenv("LOCNAV_LOG"));
  return level;
}

inline void log_msg(LogLevel level, const std::string& msg) {
  if (level < log_level()) return;
  static const char* names[] = {"debug", "info", "warn", "error"};
  std::fprintf(stderr, "[locnav %s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

inline void log_debug(const std::string& msg) { log_msg(LogLevel::kDebug, msg); }
inline void log_info(const std::string& msg) { log_msg(LogLevel::kInfo, msg); }
inline void log_warn(const std::string& msg) { log_msg(LogLevel::kWarn, msg); }
inline void log_error(const std::string& msg) { log_msg(LogLevel::kError, msg); }

}  // namespace locnav
