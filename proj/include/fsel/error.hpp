#pragma once

#include <stdexcept>
#include <string>

namespace fsel {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition on an argument violated (non-positive radius, m = 0, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class EmptyDimensionError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

// Non-conformant shapes, or a matrix that should be symmetric but is not.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class NotPositiveSemidefiniteError : public Error {
 public:
  using Error::Error;
};

// Overflow, NaN, or a solver that could not make progress.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// The scalar equation defining the correlation parameter has no root.
class IncompatibleModelError : public Error {
 public:
  using Error::Error;
};

class InfeasibleRepresentationError : public Error {
 public:
  using Error::Error;
};

class InsufficientSamplesError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

// Malformed experiment / model configuration. The message names the field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fsel
