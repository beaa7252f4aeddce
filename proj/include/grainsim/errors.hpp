#pragma once

#include <stdexcept>
#include <string>

namespace grainsim {

/// Scene/config text could not be parsed; message carries line/field info.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Parsed but violates a declared invariant (exit code 2 in the CLI).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical failure during stepping (exit code 3 in the CLI).
struct StepError : std::runtime_error {
  explicit StepError(const std::string& what, int particle_index = -1)
      : std::runtime_error(what), particle(particle_index) {}
  int particle;
};

}  // namespace grainsim
