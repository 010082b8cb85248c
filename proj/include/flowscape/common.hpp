#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace flowscape {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr const char* kToolkitVersion = "0.1.0";

// Input did not match the model's declared shape (wrong length, non-finite
// entries, bad slice specification, ...).
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A checker was handed a model whose structure it cannot interpret.
class StructureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration: unknown model/method, malformed config file, bad flags.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure during a computation (solver breakdown, overflow, ...).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operation not defined for this model (e.g. Hessian of a nonsmooth model).
class UnsupportedOperation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A grid request exceeded the configured node budget.
class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inner prox solver ran out of iterations; carries the best iterate found.
class ProxInnerError : public NumericError {
 public:
  ProxInnerError(const std::string& what, Vector best, double best_value,
                 double residual_norm)
      : NumericError(what),
        best_iterate(std::move(best)),
        best_value(best_value),
        residual_norm(residual_norm) {}

  Vector best_iterate;
  double best_value;
  double residual_norm;
};

// Search exhausted its horizon; carries the best (value, grad norm) achieved.
class HorizonError : public NumericError {
 public:
  HorizonError(const std::string& what, Vector best, double best_value,
               double best_grad_norm)
      : NumericError(what),
        best_iterate(std::move(best)),
        best_value(best_value),
        best_grad_norm(best_grad_norm) {}

  Vector best_iterate;
  double best_value;
  double best_grad_norm;
};

}  // namespace flowscape
