#pragma once

#include <stdexcept>
#include <string>

namespace magnn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Graph schema violations: edge endpoints, metapath relation mismatches.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Tensor or matrix dimensions that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values (learning rate, heads, cap, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input files.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or failed numeric checks.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace magnn
