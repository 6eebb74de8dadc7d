#pragma once

#include <stdexcept>
#include <string>

namespace cbgopt {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed arguments: dimension mismatches, non-positive scales, empty inputs.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A value lies outside the open domain of a function (bounded warps, efficiencies).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Cholesky failure after jitter escalation, linear solver failure, too many failed
/// oracle evaluations.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A query would leave the region a surrogate was trained on.
class ExtrapolationError : public Error {
 public:
  using Error::Error;
};

/// An operation was called on an object that is not ready for it.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Run configuration rejected during validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace cbgopt
