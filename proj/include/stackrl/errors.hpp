#pragma once

#include <stdexcept>
#include <string>

namespace stackrl {

// Bad static configuration (dimension mismatches, invalid config files).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Bad runtime input (out-of-range action, step after done).
struct InputError : std::runtime_error {
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure; carries a condition estimate when one is available.
struct NumericError : std::runtime_error {
  NumericError(const std::string& what, double condition)
      : std::runtime_error(what), condition_estimate(condition) {}
  double condition_estimate = 0.0;
};

}  // namespace stackrl
