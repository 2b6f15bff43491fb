#pragma once

#include <stdexcept>
#include <string>

namespace specbreak {

// Base class for all library failures that are data- or model-driven
// (as opposed to programming errors, which use std::invalid_argument).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Grid has fewer sample points than basis functions.
class UnderdeterminedFit : public Error {
 public:
  explicit UnderdeterminedFit(const std::string& msg) : Error(msg) {}
};

// Non-finite or structurally malformed input data.
class InvalidData : public Error {
 public:
  explicit InvalidData(const std::string& msg) : Error(msg) {}
};

// All-zero (or numerically zero) spectrum where a positive one is required.
class DegenerateSpectrum : public Error {
 public:
  explicit DegenerateSpectrum(const std::string& msg) : Error(msg) {}
};

// Long-run covariance estimate is singular or too ill-conditioned to invert.
class SingularLrv : public Error {
 public:
  SingularLrv(const std::string& msg, double smallest_eigenvalue)
      : Error(msg), smallest_eigenvalue(smallest_eigenvalue) {}

  double smallest_eigenvalue;
};

}  // namespace specbreak
