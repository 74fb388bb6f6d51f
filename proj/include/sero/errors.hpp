#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sero {

/// Dimension mismatch between a tensor and the layer or network consuming it.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN or infinity surfaced during evaluation.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::ptrdiff_t layer = -1)
      : std::runtime_error(layer >= 0 ? what + " (layer " + std::to_string(layer) + ")" : what),
        layer_(layer) {}

  /// Index of the offending layer, or -1 when not tied to a layer.
  std::ptrdiff_t layer() const noexcept { return layer_; }

 private:
  std::ptrdiff_t layer_;
};

/// An operation was invoked on an object in the wrong state.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Inconsistent or invalid configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace sero
