#pragma once

#include <stdexcept>
#include <string>

namespace landscape {

// Bad user-supplied parameter (alpha <= 1, kappa <= 0, ...).
class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the domain where a quantity is defined.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Iterative solver failed to meet its tolerance.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace landscape

namespace landscape {

// Bisection bracket does not contain a sign change.
class BracketError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace landscape
