#pragma once

#include <stdexcept>
#include <string>

namespace transeq {

// Malformed or out-of-domain input. The CLI maps this to exit code 1.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Simple-path enumeration for an OD pair produced more paths than allowed.
class PathBudgetError : public InputError {
 public:
  using InputError::InputError;
};

// Demand that cannot be routed under hard capacities.
class InfeasibleError : public InputError {
 public:
  using InputError::InputError;
};

// Numerical breakdown inside an iterative solver (non-finite oracle values).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace transeq
