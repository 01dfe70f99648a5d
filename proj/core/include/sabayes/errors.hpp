#pragma once

#include <stdexcept>
#include <string>

namespace sabayes {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
  using Error::Error;
};

/// Quadrature, overflow or non-finite intermediate value.
class NumericError : public Error {
public:
  using Error::Error;
};

/// Root finder invoked without a sign change on the bracket.
class BracketingError : public Error {
public:
  using Error::Error;
};

/// A documented precondition of an operation was violated.
class PreconditionError : public Error {
public:
  using Error::Error;
};

/// Malformed configuration: unknown loss/rule names, bad JSON, invalid fields.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Posterior normalization diverges as the support is widened.
class ImproperPosteriorError : public Error {
public:
  using Error::Error;
};

/// Rule calibration could not bracket the target risk.
class CalibrationError : public Error {
public:
  using Error::Error;
};

/// Rule/likelihood combination with no evaluable selection probability.
class UnsupportedError : public Error {
public:
  using Error::Error;
};

} // namespace sabayes
