#pragma once
// Error taxonomy shared by every module. All errors derive from std::runtime_error
// so call sites can catch coarsely; the distinct types exist so tests can assert
// that the *right* contract fired.

#include <stdexcept>
#include <string>

namespace ledit {

// Shape disagreement between tensors (matmul inner dims, broadcast mismatch, ...).
struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// A configuration value violates a module invariant (even kernel, bad beta range, ...).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// A runtime input is out of domain (timestep out of range, unknown class id, ...).
struct InputError : std::runtime_error {
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// A computation produced or detected a non-finite value.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Serialization / filesystem failure (bad magic, truncated checkpoint, unwritable path).
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// A softmax slice had every entry masked out; surfaced as its own type because a
// mask that blinds a query row is a structural bug, not a numeric accident.
struct AllMaskedError : std::runtime_error {
  explicit AllMaskedError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ledit
