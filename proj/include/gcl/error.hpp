#pragma once

#include <stdexcept>
#include <string>

namespace gcl {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (bad JSON, wrong field types).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A structural invariant was violated; the message names the rule.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Invalid or incompatible experiment configuration. CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Numeric failure during tensor computation (NaN/Inf, shape mismatch,
/// consumed tape).
class TensorError : public Error {
 public:
  using Error::Error;
};

}  // namespace gcl
