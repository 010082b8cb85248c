#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flowscape/common.hpp"

namespace flowscape {

enum class Smoothness { kSmooth, kPiecewiseSmooth };

// One measurable selection of the subdifferential at a query point.
struct SubgradientSelection {
  Vector vector;
  // False exactly where the subdifferential is not a singleton.
  bool is_unique = true;
  // Tie-break rule used at nonsmooth points, e.g. "sign-zero-at-kink".
  std::string selection_rule = "gradient";
};

// An objective from the zoo: a pure evaluation oracle with exact first-order
// (and, where smooth, second-order) information. Instances are immutable
// after construction and safe to evaluate concurrently.
class LossModel {
 public:
  virtual ~LossModel() = default;

  const std::string& name() const { return name_; }
  int dim() const { return dim_; }
  // Human-readable shape metadata, e.g. "W1:3x3, W2:2x3" or "(m,n,r)=(3,3,1)".
  const std::string& structure() const { return structure_; }
  Smoothness smoothness() const { return smoothness_; }
  std::optional<double> known_infimum() const { return known_infimum_; }
  const std::vector<double>& known_critical_values() const {
    return known_critical_values_;
  }

  double value(const Vector& x) const;
  SubgradientSelection subgradient(const Vector& x) const;

  // Symmetric Hessian; analytic where implemented, otherwise central
  // differences of the subgradient, symmetrized by averaging with the
  // transpose. Throws UnsupportedOperation for piecewise-smooth models.
  Matrix hessian(const Vector& x) const;

  // Specialized solver for argmin f(z) + |z - x|^2/(2 tau), when the model
  // has one (closed form or a model-specific inner scheme). Returns nullopt
  // when the generic inner descent of flows::prox_step should be used.
  virtual std::optional<Vector> solve_prox(const Vector& x, double tau,
                                           double inner_tol,
                                           int inner_max_iters) const {
    (void)x, (void)tau, (void)inner_tol, (void)inner_max_iters;
    return std::nullopt;
  }

 protected:
  LossModel(std::string name, int dim, Smoothness smoothness,
            std::string structure)
      : name_(std::move(name)),
        dim_(dim),
        smoothness_(smoothness),
        structure_(std::move(structure)) {}

  virtual double do_value(const Vector& x) const = 0;
  virtual SubgradientSelection do_subgradient(const Vector& x) const = 0;
  virtual Matrix do_hessian(const Vector& x) const;  // finite differences

  void set_known_infimum(double v) { known_infimum_ = v; }
  void set_known_critical_values(std::vector<double> v) {
    known_critical_values_ = std::move(v);
  }

 private:
  void check_input(const Vector& x) const;

  std::string name_;
  int dim_;
  Smoothness smoothness_;
  std::string structure_;
  std::optional<double> known_infimum_;
  std::vector<double> known_critical_values_;
};

using ModelPtr = std::shared_ptr<const LossModel>;

// Central-difference gradient with per-coordinate step
// h = cbrt(eps) * (1 + |x_i|). Used for default Hessians and numeric checks.
Vector central_difference_gradient(const LossModel& model, const Vector& x);

}  // namespace flowscape
