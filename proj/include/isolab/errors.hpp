#pragma once

#include <stdexcept>
#include <string>

namespace isolab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or unknown configuration input (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A numerical routine failed to produce a result (CLI exit code 3).
class SolverError : public Error {
 public:
  using Error::Error;
};

/// An internal invariant was broken (CLI exit code 4).
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

/// Caller violated an operation precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

/// Affinely dependent or otherwise degenerate geometric input.
class DegenerateInput : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

/// Grid or interface resolution too coarse for the requested operation.
class ResolutionError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

/// A test function violates the weighted mean-zero constraint.
class ConstraintError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

}  // namespace isolab
