#pragma once

#include <stdexcept>
#include <string>

namespace balsam {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration (spline, priors, sampler or design settings).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the domain of a function (no silent extrapolation).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or overflowing intermediate values, failed factorizations.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace balsam
