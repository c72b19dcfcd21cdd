#pragma once

#include <stdexcept>
#include <string>

namespace mpfio {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Non-finite value or otherwise unusable numeric data.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// An iterative method did not settle.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace mpfio
