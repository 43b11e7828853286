#pragma once

#include <stdexcept>
#include <string>

namespace lsnn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid input: dimension mismatches, bad mesh sizes, unknown ids.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite or exploding loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// File system failures.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A checkpoint file that cannot be decoded.
class CorruptCheckpoint : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace lsnn
