#pragma once

#include <stdexcept>
#include <string>

namespace amnc {

/// Incompatible tensor extents. The message names both shapes.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Invalid hyperparameter combination (e.g. d not divisible by the head count).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Instance exceeds what an exhaustive search can enumerate.
struct SizeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Zero-degree node or zero-association partition.
struct DegenerateGraphError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad magic, version or header in a binary/PGM file.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Payload shorter than its header announces.
struct LengthError : FormatError {
  using FormatError::FormatError;
};

/// Value outside what a file format can represent.
struct RangeError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

/// Non-finite function value during a numerical evaluation.
struct EvaluationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace amnc
