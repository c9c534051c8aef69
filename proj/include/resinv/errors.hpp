#pragma once

#include <stdexcept>
#include <string>

namespace resinv {

// Numerical failure (solver divergence, indefinite matrix, non-finite values).
// CLI maps this to exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user-facing configuration (invalid sizes, inconsistent fields,
// unknown keys). CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// File-level failure (missing file, bad magic, short read). Exit code 4.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace resinv
