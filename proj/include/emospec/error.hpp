#pragma once

#include <stdexcept>
#include <string>

namespace emospec {

// Root of every exception thrown by the library. The subclasses map onto the
// CLI exit codes (2 = bad configuration, 3 = bad data, 4 = numeric failure).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller-supplied parameter violates a precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Input files or in-memory records are malformed or inconsistent.
class DataError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf appeared in a computation that must stay finite.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace emospec
