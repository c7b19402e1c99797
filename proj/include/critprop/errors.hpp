#pragma once

#include <stdexcept>
#include <string>

namespace critprop {

// Usage or precondition violation (bad flag, negative variance, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An integrand or log argument left the domain where it is finite.
class NumericDomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Iteration failed to settle (fixed point, q* resolution, training loss).
class NonConvergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BracketingError : public std::runtime_error {
 public:
  BracketingError(const std::string& what, double low, double high, double f_low, double f_high)
      : std::runtime_error(what), low(low), high(high), f_low(f_low), f_high(f_high) {}
  double low, high, f_low, f_high;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DegenerateInput : public std::runtime_error {
 public:
  DegenerateInput(const std::string& what, std::size_t index)
      : std::runtime_error(what), index(index) {}
  std::size_t index;
};

// IDX parsing failures: bad magic, count mismatch, truncated payload.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, int epoch, int batch)
      : std::runtime_error(what), epoch(epoch), batch(batch) {}
  int epoch, batch;
};

}  // namespace critprop
