#pragma once

#include <stdexcept>
#include <string>

namespace ibm {

/// Bad user input: malformed spec strings, violated preconditions.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// An enumeration or search exceeded its configured budget.
class BudgetError : public std::runtime_error {
 public:
  explicit BudgetError(const std::string& what) : std::runtime_error(what) {}
};

/// A deterministic internal invariant failed. Indicates a bug, not bad input;
/// carries a diagnostic dump of the offending state.
class InvariantError : public std::logic_error {
 public:
  explicit InvariantError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace ibm
