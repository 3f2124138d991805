#pragma once

#include <stdexcept>
#include <string>

namespace istas {

// Invalid or inconsistent configuration (scene specs, model configs, CLI input).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Tensor shapes that do not line up.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A runtime value broke a documented invariant (e.g. non-binary spikes).
struct InvariantError : std::logic_error {
  using std::logic_error::logic_error;
};

// ISTA step size too large: the objective increased.
struct StepSizeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File I/O and parse failures.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace istas
