#pragma once

#include <stdexcept>
#include <string>

namespace spqt {

/// Bad inputs: malformed configuration, violated normalization, schema errors.
/// The CLI maps this (and std::invalid_argument) to exit code 2.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Runtime numeric failures: accuracy budget exceeded, degenerate state,
/// forbidden jump, model inconsistency. The CLI maps this to exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace spqt
