#pragma once

#include <stdexcept>
#include <string>

namespace hiaudit {

// Invalid configuration or parameter values. The CLI maps this to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// An API was called in the wrong state (stepping a finished episode, etc).
class UsageError : public std::logic_error {
 public:
  explicit UsageError(const std::string& what) : std::logic_error(what) {}
};

// Dimension mismatch between tensors / nets.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// NaN or runaway loss during optimisation. The CLI maps this to exit code 3.
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace hiaudit
