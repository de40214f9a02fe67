#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace curveflow {

// Exit codes used by the command-line driver.
enum class ExitCode : int {
  success = 0,
  config_error = 2,
  numerical_abort = 3,
  check_failure = 4,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const { return ExitCode::numerical_abort; }
};

// Bad arguments, mismatched grids, out-of-range parameters.
class DomainError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const override { return ExitCode::config_error; }
};

class OutOfRange : public DomainError {
 public:
  using DomainError::DomainError;
};

class GridMismatch : public DomainError {
 public:
  GridMismatch() : DomainError("tensor fields live on different grids") {}
  using DomainError::DomainError;
};

class ConfigError : public DomainError {
 public:
  using DomainError::DomainError;
};

// Numerical failures that abort a run.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class SingularMetric : public NumericalError {
 public:
  SingularMetric(std::size_t node, double min_eigenvalue)
      : NumericalError("metric not positive-definite at node " + std::to_string(node) +
                       " (smallest eigenvalue " + std::to_string(min_eigenvalue) + ")"),
        node(node),
        eigenvalue(min_eigenvalue) {}
  std::size_t node;
  double eigenvalue;
};

class LostPositivity : public SingularMetric {
 public:
  using SingularMetric::SingularMetric;
};

class NonFinite : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NonInvertibleEinstein : public NumericalError {
 public:
  explicit NonInvertibleEinstein(std::size_t node)
      : NumericalError("Einstein tensor not invertible at node " + std::to_string(node)), node(node) {}
  std::size_t node;
};

class DefinitenessViolated : public NumericalError {
 public:
  DefinitenessViolated(std::size_t node, double eigenvalue, const std::string& why = {})
      : NumericalError("sigma*E not negative definite at node " + std::to_string(node) +
                       " (eigenvalue " + std::to_string(eigenvalue) + ")" + (why.empty() ? "" : ": " + why)),
        node(node),
        eigenvalue(eigenvalue) {}
  std::size_t node;
  double eigenvalue;
};

}  // namespace curveflow
