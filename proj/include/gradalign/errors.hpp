// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace gradalign {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Operand lengths or shapes disagree.
struct DimensionError : Error {
  using Error::Error;
};

/// A zero vector (or numerically zero pre-normalization vector) where a
/// direction is required.
struct DegenerateInputError : Error {
  using Error::Error;
};

/// Out-of-range scalar argument (tau <= 0, sigma < 0, lambda outside [0,1]).
struct ParameterError : Error {
  using Error::Error;
};

/// Non-finite value produced during evaluation or training.
struct NumericalError : Error {
  using Error::Error;
};

/// -log(0) or a KL support violation.
struct InfiniteLossError : Error {
  using Error::Error;
};

/// Inconsistent experiment or model configuration.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace gradalign
