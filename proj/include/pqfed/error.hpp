#pragma once

#include <stdexcept>
#include <string>

namespace pqfed {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input file (bad magic, bad header, truncated payload).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A cluster or pool cannot supply the requested number of samples.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Matrix/vector dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value fails a domain invariant (negative sensitivity, bad label, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// An operation precondition does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Configuration file problem (unknown key, out-of-range value, missing seed).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem problem while reading or writing an artifact.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace pqfed
