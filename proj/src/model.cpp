#include "flowscape/model.hpp"

#include <cmath>
#include <limits>

namespace flowscape {

namespace {
const double kFdStepScale =
    std::cbrt(std::numeric_limits<double>::epsilon());
}  // namespace

void LossModel::check_input(const Vector& x) const {
  if (x.size() != dim_) {
    throw ShapeError(name_ + ": expected dimension " + std::to_string(dim_) +
                     ", got " + std::to_string(x.size()));
  }
  if (!x.allFinite()) {
    throw ShapeError(name_ + ": input has non-finite entries");
  }
}

double LossModel::value(const Vector& x) const {
  check_input(x);
  return do_value(x);
}

SubgradientSelection LossModel::subgradient(const Vector& x) const {
  check_input(x);
  return do_subgradient(x);
}

Matrix LossModel::hessian(const Vector& x) const {
  if (smoothness_ != Smoothness::kSmooth) {
    throw UnsupportedOperation(name_ + ": Hessian of a piecewise-smooth model");
  }
  check_input(x);
  Matrix h = do_hessian(x);
  return 0.5 * (h + h.transpose());
}

Matrix LossModel::do_hessian(const Vector& x) const {
  // Central differences of the gradient, column by column.
  const int n = dim_;
  Matrix h(n, n);
  Vector xp = x, xm = x;
  for (int i = 0; i < n; ++i) {
    double step = kFdStepScale * (1.0 + std::abs(x[i]));
    xp[i] = x[i] + step;
    xm[i] = x[i] - step;
    h.col(i) = (do_subgradient(xp).vector - do_subgradient(xm).vector) /
               (xp[i] - xm[i]);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return h;
}

Vector central_difference_gradient(const LossModel& model, const Vector& x) {
  const int n = static_cast<int>(x.size());
  Vector g(n);
  Vector xp = x, xm = x;
  for (int i = 0; i < n; ++i) {
    double step = kFdStepScale * (1.0 + std::abs(x[i]));
    xp[i] = x[i] + step;
    xm[i] = x[i] - step;
    g[i] = (model.value(xp) - model.value(xm)) / (xp[i] - xm[i]);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return g;
}

}  // namespace flowscape
