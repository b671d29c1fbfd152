#pragma once

#include <stdexcept>
#include <string>

namespace dfr {

// Base for every error the library raises. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad shapes, out-of-range parameters, inconsistent layer sets.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Unreadable/unwritable paths and undecodable images.
class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed DFRW weight file (bad magic, truncation, missing or misshapen layer).
class WeightsError : public IoError {
 public:
  using IoError::IoError;
};

// NaN/Inf detected during optimization.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Broken internal invariant; indicates a bug rather than bad input.
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace dfr
