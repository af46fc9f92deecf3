#pragma once

#include <stdexcept>
#include <string>

namespace hajnorm {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data violates a structural requirement (metric axioms, sizes, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Operation called outside its domain (x == y for a scale query, non-grid space, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Requested instance exceeds a configured size budget.
class ResourceError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent configuration or spec.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace hajnorm
