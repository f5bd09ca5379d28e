#pragma once

#include <stdexcept>
#include <string>

namespace ddopt {

/// Numerical failure: divergence, iteration cap, singular system, overflow.
struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid user-facing configuration (bad flag, malformed file, out-of-range value).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ddopt
