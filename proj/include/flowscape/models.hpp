#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "flowscape/model.hpp"

namespace flowscape {

// Numerically stable logistic function, branch split at z = 0.
double sigmoid(double z);

// f(x) = 0.5 |x|^2. Closed-form prox x/(1+tau).
class QuadraticBowl : public LossModel {
 public:
  explicit QuadraticBowl(int dim);
  std::optional<Vector> solve_prox(const Vector& x, double tau, double,
                                   int) const override;

 protected:
  double do_value(const Vector& x) const override;
  SubgradientSelection do_subgradient(const Vector& x) const override;
  Matrix do_hessian(const Vector& x) const override;
};

// f(x) = sum_i |x_i|. Closed-form prox: soft thresholding.
class L1NormModel : public LossModel {
 public:
  explicit L1NormModel(int dim);
  std::optional<Vector> solve_prox(const Vector& x, double tau, double,
                                   int) const override;

 protected:
  double do_value(const Vector& x) const override;
  SubgradientSelection do_subgradient(const Vector& x) const override;
};

// f == c.
class ConstantModel : public LossModel {
 public:
  ConstantModel(int dim, double c);

 protected:
  double do_value(const Vector&) const override { return c_; }
  SubgradientSelection do_subgradient(const Vector&) const override;
  Matrix do_hessian(const Vector&) const override;

 private:
  double c_;
};

// f(x1,x2,y1,y2) = (x1 y1 - 1)^2 + (x2 y1 - 1)^2 + (x2 y2 - 1)^2.
// Rank-one completion of a 2x2 matrix with one unobserved entry. The critical
// set splits into four connected components, parametrized below.
class MatrixCompletionEx1 : public LossModel {
 public:
  MatrixCompletionEx1();

  // Parametric points of the four critical components (t != 0 for c1..c3).
  static Vector c1_point(double t);  // (t, t, 1/t, 1/t), value 0
  static Vector c2_point(double t);  // (t, 0, 1/t, -1/t), value 2
  static Vector c3_point(double t);  // (t, -t, 0, -1/t), value 2
  static Vector c4_point();          // origin, value 3

 protected:
  double do_value(const Vector& x) const override;
  SubgradientSelection do_subgradient(const Vector& x) const override;
  Matrix do_hessian(const Vector& x) const override;
};

// f(x1,x2) = (x2 max(x1,0) - 1)^2. One-hidden-unit ReLU network, one datum.
class ReluToy : public LossModel {
 public:
  ReluToy();

 protected:
  double do_value(const Vector& x) const override;
  SubgradientSelection do_subgradient(const Vector& x) const override;
};

// f(w1,w2) = 0.5 [ (w2 s(w1) - y1)^2 + (w2 s(-w1) - y2)^2 ],  s = sigmoid.
// One-hidden-unit sigmoid network with the two data points (1, y1), (-1, y2).
class SigmoidTwoData : public LossModel {
 public:
  SigmoidTwoData(double y1, double y2);

  double target1() const { return y1_; }
  double target2() const { return y2_; }

 protected:
  double do_value(const Vector& w) const override;
  SubgradientSelection do_subgradient(const Vector& w) const override;

 private:
  double y1_, y2_;
};

// f(w) = 0.5 (w_L s(w_{L-1} ... s(w_1 x)) - y)^2, scalar weights, one datum.
class SigmoidChain : public LossModel {
 public:
  SigmoidChain(int layers, double x, double y);

  int layers() const { return layers_; }
  double datum_x() const { return x_; }
  double datum_y() const { return y_; }

 protected:
  double do_value(const Vector& w) const override;
  SubgradientSelection do_subgradient(const Vector& w) const override;

 private:
  int layers_;
  double x_, y_;
};

// f(x) = x^2 (1 + x^2) / (1 + x^4). Bounded below with finitely many
// critical values, but its descent trajectory from x0 >= 2 grows without
// bound; implicit_g gives the closed-form time parametrization.
class CexUnbounded : public LossModel {
 public:
  CexUnbounded();

  // Antiderivative g with g(x(t)) = g(x(0)) + 2t along the descent flow.
  // Defined for x^2 > 1 + sqrt(2); the flow from x0 = 2 stays inside.
  static double implicit_g(double x);

 protected:
  double do_value(const Vector& x) const override;
  SubgradientSelection do_subgradient(const Vector& x) const override;
};

// Piecewise C^1 function with critical points {-4} U {2k} and critical
// values {-8} U {-3 (1 - 2^-k)}: infinitely many critical values
// accumulating at -3. Global minimum -8 at x = -4.
class CexInfiniteCritical : public LossModel {
 public:
  CexInfiniteCritical();

  static double value_at(double x);
  static double derivative_at(double x);

 protected:
  double do_value(const Vector& x) const override;
  SubgradientSelection do_subgradient(const Vector& x) const override;
};

// f(x) = 0 for x <= 0, x^2 sin(1/x) for x > 0. The zero sublevel set has
// infinitely many connected components accumulating at the origin.
class Oscillatory : public LossModel {
 public:
  Oscillatory();

 protected:
  double do_value(const Vector& x) const override;
  SubgradientSelection do_subgradient(const Vector& x) const override;
};

// Base for models over a factor pair (X, Y) with X: n1 x r, Y: n2 x r,
// flattened column-major, X block first.
class FactorPairModel : public LossModel {
 public:
  int rows_x() const { return n1_; }
  int rows_y() const { return n2_; }
  int rank() const { return r_; }

  Matrix x_factor(const Vector& v) const;
  Matrix y_factor(const Vector& v) const;
  Vector pack(const Matrix& x, const Matrix& y) const;

 protected:
  FactorPairModel(std::string name, int n1, int n2, int r,
                  Smoothness smoothness);

  int n1_, n2_, r_;
};

// A set of linear measurement matrices plus right-hand sides.
struct SensingEnsemble {
  std::vector<Matrix> matrices;  // each n1 x n2
  Vector b;                      // m entries
  std::optional<std::pair<int, double>> rip_level;  // (r, delta_r) estimate
  std::optional<double> lower_bound_c;
  Matrix planted;  // the rank-r matrix the right-hand sides came from
};

// Deterministic Gaussian ensemble, b_i = <A_i, planted>_F with a planted
// rank-r matrix. lower_bound_c is estimated by probing coordinate rank-one
// matrices plus `probe_samples` random rank-r matrices, and left unset when
// the probed minimum is not bounded away from zero.
SensingEnsemble build_sensing_ensemble(uint64_t seed, int m, int n1, int n2,
                                       int r, int probe_samples = 1000);

// (1/m) sum_i <A_i, T>_F^2 / |T|_F^2.
double ensemble_quadratic_ratio(const SensingEnsemble& ensemble,
                                const Matrix& t);

std::optional<double> estimate_lower_bound(const SensingEnsemble& ensemble,
                                           int r, int probe_samples,
                                           uint64_t seed);

// f(X,Y) = (1/2m) sum_i (<A_i, X Y^T>_F - b_i)^2.
class MatrixSensing : public FactorPairModel {
 public:
  MatrixSensing(SensingEnsemble ensemble, int n1, int n2, int r);

  const SensingEnsemble& ensemble() const { return ensemble_; }

 protected:
  double do_value(const Vector& v) const override;
  SubgradientSelection do_subgradient(const Vector& v) const override;

 private:
  SensingEnsemble ensemble_;
};

// f(X,Y) = |X Y^T - M|_1 (entrywise). Subgradients are (L Y, L^T X) with
// L in sign(X Y^T - M); the selection takes 0 on zero residual entries.
class L1Factorization : public FactorPairModel {
 public:
  L1Factorization(Matrix m, int r);

  const Matrix& data() const { return m_; }
  // The selection's multiplier matrix at v (entrywise sign, 0 at kinks).
  Matrix lambda_at(const Vector& v) const;

  // Prox subproblem solved by damped Newton on a pseudo-Huber smoothing of
  // the entrywise absolute value. The smoothing shares one multiplier
  // matrix between the X- and Y-blocks of the optimality system.
  std::optional<Vector> solve_prox(const Vector& v, double tau,
                                   double inner_tol,
                                   int inner_max_iters) const override;

 private:
  double do_value(const Vector& v) const override;
  SubgradientSelection do_subgradient(const Vector& v) const override;

  Matrix m_;
  double smoothing_;
};

// f(W_1..W_L) = 0.5 | W_L ... W_1 X - Y |_F^2 with W_i: d_i x d_{i-1}.
// Flattened column-major, W_1 block first.
class LinearNet : public LossModel {
 public:
  LinearNet(std::vector<int> dims, Matrix x_data, Matrix y_data,
            std::optional<double> infimum = std::nullopt);

  const std::vector<int>& dims() const { return dims_; }
  int layers() const { return static_cast<int>(dims_.size()) - 1; }
  const Matrix& x_data() const { return x_data_; }
  const Matrix& y_data() const { return y_data_; }

  std::vector<Matrix> weights(const Vector& v) const;
  Vector pack(const std::vector<Matrix>& w) const;

 protected:
  double do_value(const Vector& v) const override;
  SubgradientSelection do_subgradient(const Vector& v) const override;

 private:
  Matrix residual(const std::vector<Matrix>& w) const;

  std::vector<int> dims_;  // d_0 .. d_L
  Matrix x_data_, y_data_;
};

}  // namespace flowscape
