#pragma once

#include <stdexcept>
#include <string>

namespace lqg {

// Process exit codes used by the CLI. Library code throws the matching
// exception type; main() translates.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
  kExitNoOptimum = 5,
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when NaN/Inf surfaces in a gradient or loss. Training must abort,
// never continue on corrupted numbers.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

class NoOptimumError : public std::runtime_error {
 public:
  explicit NoOptimumError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace lqg
