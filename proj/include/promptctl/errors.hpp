#pragma once

#include <stdexcept>
#include <string>

namespace promptctl {

// Operand dimensions do not line up.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A value is out of range or otherwise unusable (empty corpus, bad token id, ...).
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// An iterative routine failed to converge. Carries the last iterate so callers
// can inspect how far it got.
struct NumericError : std::runtime_error {
  double last_iterate;
  NumericError(const std::string& what, double last)
      : std::runtime_error(what), last_iterate(last) {}
};

// A capability was requested that the object does not provide
// (e.g. gradients from a model that has none).
struct CapabilityError : std::logic_error {
  using std::logic_error::logic_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace promptctl
