#pragma once

#include <stdexcept>
#include <string>

namespace mckv {

// Bad configuration: unknown registry key, invalid numeric range, malformed
// config file.  Maps to CLI exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Structural blowup guard: quantized-measure enumeration or decision-rule
// space above the configured cap, transport support too large for an exact
// solve.
struct SizeError : std::runtime_error {
  explicit SizeError(const std::string& what) : std::runtime_error(what) {}
};

// Runtime numeric failure: non-finite model output, non-finite state after a
// step.  Maps to CLI exit code 3.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mckv
