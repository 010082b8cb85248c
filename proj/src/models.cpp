#include "flowscape/models.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>

#include "flowscape/rng.hpp"

namespace flowscape {

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

constexpr const char* kGradientRule = "gradient";
constexpr const char* kKinkRule = "zero-at-kink";

SubgradientSelection gradient_selection(Vector g) {
  SubgradientSelection s;
  s.vector = std::move(g);
  s.is_unique = true;
  s.selection_rule = kGradientRule;
  return s;
}

double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

// ---------------------------------------------------------------------------
// QuadraticBowl

QuadraticBowl::QuadraticBowl(int dim)
    : LossModel("quadratic-bowl", dim, Smoothness::kSmooth,
                "x in R^" + std::to_string(dim)) {
  set_known_infimum(0.0);
  set_known_critical_values({0.0});
}

double QuadraticBowl::do_value(const Vector& x) const {
  return 0.5 * x.squaredNorm();
}

SubgradientSelection QuadraticBowl::do_subgradient(const Vector& x) const {
  return gradient_selection(x);
}

Matrix QuadraticBowl::do_hessian(const Vector&) const {
  return Matrix::Identity(dim(), dim());
}

std::optional<Vector> QuadraticBowl::solve_prox(const Vector& x, double tau,
                                                double, int) const {
  return Vector(x / (1.0 + tau));
}

// ---------------------------------------------------------------------------
// L1NormModel

L1NormModel::L1NormModel(int dim)
    : LossModel("l1-norm", dim, Smoothness::kPiecewiseSmooth,
                "x in R^" + std::to_string(dim)) {
  set_known_infimum(0.0);
  set_known_critical_values({0.0});
}

double L1NormModel::do_value(const Vector& x) const {
  return x.cwiseAbs().sum();
}

SubgradientSelection L1NormModel::do_subgradient(const Vector& x) const {
  SubgradientSelection s;
  s.vector = x.unaryExpr([](double v) { return sign0(v); });
  s.is_unique = (x.array() != 0.0).all();
  s.selection_rule = kKinkRule;
  return s;
}

std::optional<Vector> L1NormModel::solve_prox(const Vector& x, double tau,
                                              double, int) const {
  return Vector(x.unaryExpr([tau](double v) {
    return sign0(v) * std::max(std::abs(v) - tau, 0.0);
  }));
}

// ---------------------------------------------------------------------------
// ConstantModel

ConstantModel::ConstantModel(int dim, double c)
    : LossModel("constant", dim, Smoothness::kSmooth,
                "x in R^" + std::to_string(dim)),
      c_(c) {
  set_known_infimum(c);
  set_known_critical_values({c});
}

SubgradientSelection ConstantModel::do_subgradient(const Vector&) const {
  return gradient_selection(Vector::Zero(dim()));
}

Matrix ConstantModel::do_hessian(const Vector&) const {
  return Matrix::Zero(dim(), dim());
}

// ---------------------------------------------------------------------------
// MatrixCompletionEx1

MatrixCompletionEx1::MatrixCompletionEx1()
    : LossModel("matrix-completion-ex1", 4, Smoothness::kSmooth,
                "(x1,x2,y1,y2)") {
  set_known_infimum(0.0);
  set_known_critical_values({0.0, 2.0, 3.0});
}

double MatrixCompletionEx1::do_value(const Vector& v) const {
  const double x1 = v[0], x2 = v[1], y1 = v[2], y2 = v[3];
  const double r1 = x1 * y1 - 1.0, r2 = x2 * y1 - 1.0, r3 = x2 * y2 - 1.0;
  return r1 * r1 + r2 * r2 + r3 * r3;
}

SubgradientSelection MatrixCompletionEx1::do_subgradient(
    const Vector& v) const {
  const double x1 = v[0], x2 = v[1], y1 = v[2], y2 = v[3];
  const double r1 = x1 * y1 - 1.0, r2 = x2 * y1 - 1.0, r3 = x2 * y2 - 1.0;
  Vector g(4);
  g[0] = 2.0 * r1 * y1;
  g[1] = 2.0 * (r2 * y1 + r3 * y2);
  g[2] = 2.0 * (r1 * x1 + r2 * x2);
  g[3] = 2.0 * r3 * x2;
  return gradient_selection(std::move(g));
}

Matrix MatrixCompletionEx1::do_hessian(const Vector& v) const {
  const double x1 = v[0], x2 = v[1], y1 = v[2], y2 = v[3];
  Matrix h = Matrix::Zero(4, 4);
  h(0, 0) = 2.0 * y1 * y1;
  h(1, 1) = 2.0 * (y1 * y1 + y2 * y2);
  h(2, 2) = 2.0 * (x1 * x1 + x2 * x2);
  h(3, 3) = 2.0 * x2 * x2;
  h(0, 2) = h(2, 0) = 2.0 * (2.0 * x1 * y1 - 1.0);
  h(1, 2) = h(2, 1) = 2.0 * (2.0 * x2 * y1 - 1.0);
  h(1, 3) = h(3, 1) = 2.0 * (2.0 * x2 * y2 - 1.0);
  return h;
}

Vector MatrixCompletionEx1::c1_point(double t) {
  if (t == 0.0) throw ShapeError("c1_point: t must be nonzero");
  Vector v(4);
  v << t, t, 1.0 / t, 1.0 / t;
  return v;
}

Vector MatrixCompletionEx1::c2_point(double t) {
  if (t == 0.0) throw ShapeError("c2_point: t must be nonzero");
  Vector v(4);
  v << t, 0.0, 1.0 / t, -1.0 / t;
  return v;
}

Vector MatrixCompletionEx1::c3_point(double t) {
  if (t == 0.0) throw ShapeError("c3_point: t must be nonzero");
  Vector v(4);
  v << t, -t, 0.0, -1.0 / t;
  return v;
}

Vector MatrixCompletionEx1::c4_point() { return Vector::Zero(4); }

// ---------------------------------------------------------------------------
// ReluToy

ReluToy::ReluToy()
    : LossModel("relu-toy", 2, Smoothness::kPiecewiseSmooth, "(x1,x2)") {
  set_known_infimum(0.0);
}

double ReluToy::do_value(const Vector& v) const {
  const double r = v[1] * std::max(v[0], 0.0) - 1.0;
  return r * r;
}

SubgradientSelection ReluToy::do_subgradient(const Vector& v) const {
  const double x1 = v[0], x2 = v[1];
  SubgradientSelection s;
  s.vector = Vector::Zero(2);
  if (x1 > 0.0) {
    const double r = x2 * x1 - 1.0;
    s.vector[0] = 2.0 * r * x2;
    s.vector[1] = 2.0 * r * x1;
    s.is_unique = true;
    s.selection_rule = kGradientRule;
  } else {
    // Inactive branch: f is constant 1 in x1 for x1 < 0 and in x2 as well.
    s.is_unique = !(x1 == 0.0 && x2 != 0.0);
    s.selection_rule = x1 == 0.0 ? kKinkRule : kGradientRule;
  }
  return s;
}

// ---------------------------------------------------------------------------
// SigmoidTwoData

namespace {

// inf over w of the two-point sigmoid loss: 0.5 (y1^2 + y2^2 - sup_a h(a))
// with h(a) = (a y1 + (1-a) y2)^2 / (a^2 + (1-a)^2), a in [0,1].
double two_data_infimum(double y1, double y2) {
  auto h = [&](double a) {
    double num = a * y1 + (1.0 - a) * y2;
    double den = a * a + (1.0 - a) * (1.0 - a);
    return num * num / den;
  };
  double best = std::max(h(0.0), h(1.0));
  const int n = 4096;
  double best_a = h(0.0) >= h(1.0) ? 0.0 : 1.0;
  for (int i = 1; i < n; ++i) {
    double a = static_cast<double>(i) / n;
    if (h(a) > best) {
      best = h(a);
      best_a = a;
    }
  }
  // Golden-section refine around the scan winner.
  double lo = std::max(0.0, best_a - 1.0 / n), hi = std::min(1.0, best_a + 1.0 / n);
  const double gr = 0.6180339887498949;
  for (int it = 0; it < 200; ++it) {
    double m1 = hi - gr * (hi - lo), m2 = lo + gr * (hi - lo);
    if (h(m1) >= h(m2)) hi = m2; else lo = m1;
  }
  best = std::max(best, h(0.5 * (lo + hi)));
  return 0.5 * (y1 * y1 + y2 * y2 - best);
}

}  // namespace

SigmoidTwoData::SigmoidTwoData(double y1, double y2)
    : LossModel("sigmoid-two-data", 2, Smoothness::kSmooth,
                "(w1,w2), data (1," + std::to_string(y1) + "), (-1," +
                    std::to_string(y2) + ")"),
      y1_(y1),
      y2_(y2) {
  set_known_infimum(two_data_infimum(y1, y2));
}

double SigmoidTwoData::do_value(const Vector& w) const {
  const double a = sigmoid(w[0]), b = sigmoid(-w[0]);
  const double r1 = w[1] * a - y1_, r2 = w[1] * b - y2_;
  return 0.5 * (r1 * r1 + r2 * r2);
}

SubgradientSelection SigmoidTwoData::do_subgradient(const Vector& w) const {
  const double a = sigmoid(w[0]), b = sigmoid(-w[0]);
  const double r1 = w[1] * a - y1_, r2 = w[1] * b - y2_;
  const double da = a * b;  // sigma'(w1)
  Vector g(2);
  g[0] = w[1] * da * (r1 - r2);
  g[1] = r1 * a + r2 * b;
  return gradient_selection(std::move(g));
}

// ---------------------------------------------------------------------------
// SigmoidChain

SigmoidChain::SigmoidChain(int layers, double x, double y)
    : LossModel("sigmoid-chain", layers, Smoothness::kSmooth,
                "w in R^" + std::to_string(layers) + ", datum (" +
                    std::to_string(x) + "," + std::to_string(y) + ")"),
      layers_(layers),
      x_(x),
      y_(y) {
  if (layers < 2) throw ConfigError("sigmoid-chain: needs at least 2 layers");
  set_known_infimum(0.0);
}

double SigmoidChain::do_value(const Vector& w) const {
  double p = x_;
  for (int i = 0; i + 1 < layers_; ++i) p = sigmoid(w[i] * p);
  const double e = w[layers_ - 1] * p - y_;
  return 0.5 * e * e;
}

SubgradientSelection SigmoidChain::do_subgradient(const Vector& w) const {
  const int L = layers_;
  std::vector<double> p(L);  // p[0] = x, p[i] = s(w_i p_{i-1}) for i>=1
  p[0] = x_;
  for (int i = 1; i < L; ++i) p[i] = sigmoid(w[i - 1] * p[i - 1]);
  const double e = w[L - 1] * p[L - 1] - y_;
  Vector g(L);
  g[L - 1] = e * p[L - 1];
  double q = e * w[L - 1];  // df / dp_{L-1}
  for (int i = L - 2; i >= 0; --i) {
    const double ds = p[i + 1] * (1.0 - p[i + 1]);  // sigma'(w_{i+1} p_i)
    g[i] = q * ds * p[i];
    q *= ds * w[i];
  }
  return gradient_selection(std::move(g));
}

// ---------------------------------------------------------------------------
// CexUnbounded

CexUnbounded::CexUnbounded()
    : LossModel("cex-unbounded", 1, Smoothness::kSmooth, "x in R") {
  set_known_infimum(0.0);
  // Maxima at x = +-(sqrt(2)-1)^{-1/2}, value (sqrt(2)+1)/2.
  set_known_critical_values({0.0, 0.5 * (std::sqrt(2.0) + 1.0)});
}

double CexUnbounded::do_value(const Vector& v) const {
  const double x2 = v[0] * v[0];
  return x2 * (1.0 + x2) / (1.0 + x2 * x2);
}

SubgradientSelection CexUnbounded::do_subgradient(const Vector& v) const {
  const double x = v[0], x2 = x * x, x4 = x2 * x2;
  const double den = (1.0 + x4) * (1.0 + x4);
  Vector g(1);
  g[0] = -2.0 * x * (x4 - 2.0 * x2 - 1.0) / den;
  return gradient_selection(std::move(g));
}

double CexUnbounded::implicit_g(double x) {
  const double s2 = std::sqrt(2.0);
  const double x2 = x * x;
  return 0.25 * x2 * x2 + x2 + (2.0 + s2) * std::log(x2 - s2 - 1.0) +
         (2.0 - s2) * std::log(x2 + s2 - 1.0) - std::log(x);
}

// ---------------------------------------------------------------------------
// CexInfiniteCritical

CexInfiniteCritical::CexInfiniteCritical()
    : LossModel("cex-infinite-critical", 1, Smoothness::kSmooth, "x in R") {
  set_known_infimum(-8.0);
}

double CexInfiniteCritical::value_at(double x) {
  if (x <= -2.0) return (x + 4.0) * (x + 4.0) - 8.0;
  if (x <= 0.0) return -x * x;
  const double m = std::floor(x);
  long k;
  bool descending;  // true on [2k, 2k+1], false on [2k-1, 2k]
  if (static_cast<long>(m) % 2 == 0) {
    k = static_cast<long>(m) / 2;
    descending = true;
  } else {
    k = (static_cast<long>(m) + 1) / 2;
    descending = false;
  }
  const double p = std::ldexp(1.0, static_cast<int>(k) + 1);  // 2^{k+1}
  const double s = std::ldexp(1.0, -static_cast<int>(k));     // 2^{-k}
  const double base = x - 2.0 * static_cast<double>(k);
  const double tpow = std::pow(std::abs(base), p);
  return (descending ? -s * tpow : s * tpow) - 3.0 * (1.0 - s);
}

double CexInfiniteCritical::derivative_at(double x) {
  if (x <= -2.0) return 2.0 * (x + 4.0);
  if (x <= 0.0) return -2.0 * x;
  const double m = std::floor(x);
  long k;
  bool descending;
  if (static_cast<long>(m) % 2 == 0) {
    k = static_cast<long>(m) / 2;
    descending = true;
  } else {
    k = (static_cast<long>(m) + 1) / 2;
    descending = false;
  }
  const double p = std::ldexp(1.0, static_cast<int>(k) + 1);
  const double base = x - 2.0 * static_cast<double>(k);
  // 2^{-k} * 2^{k+1} = 2; exponent p-1 is an odd integer.
  const double dpow = std::pow(std::abs(base), p - 1.0) * sign0(base);
  return descending ? -2.0 * dpow : 2.0 * dpow;
}

double CexInfiniteCritical::do_value(const Vector& v) const {
  return value_at(v[0]);
}

SubgradientSelection CexInfiniteCritical::do_subgradient(
    const Vector& v) const {
  Vector g(1);
  g[0] = derivative_at(v[0]);
  return gradient_selection(std::move(g));
}

// ---------------------------------------------------------------------------
// Oscillatory

Oscillatory::Oscillatory()
    : LossModel("oscillatory", 1, Smoothness::kPiecewiseSmooth, "x in R") {}

double Oscillatory::do_value(const Vector& v) const {
  const double x = v[0];
  if (x <= 0.0) return 0.0;
  return x * x * std::sin(1.0 / x);
}

SubgradientSelection Oscillatory::do_subgradient(const Vector& v) const {
  const double x = v[0];
  SubgradientSelection s;
  s.vector = Vector::Zero(1);
  if (x > 0.0) {
    s.vector[0] = 2.0 * x * std::sin(1.0 / x) - std::cos(1.0 / x);
    s.is_unique = true;
    s.selection_rule = kGradientRule;
  } else {
    s.is_unique = x < 0.0;
    s.selection_rule = x == 0.0 ? kKinkRule : kGradientRule;
  }
  return s;
}

// ---------------------------------------------------------------------------
// FactorPairModel

FactorPairModel::FactorPairModel(std::string name, int n1, int n2, int r,
                                 Smoothness smoothness)
    : LossModel(std::move(name), (n1 + n2) * r, smoothness,
                "(n1,n2,r)=(" + std::to_string(n1) + "," + std::to_string(n2) +
                    "," + std::to_string(r) + "), X then Y, column-major"),
      n1_(n1),
      n2_(n2),
      r_(r) {}

Matrix FactorPairModel::x_factor(const Vector& v) const {
  return Eigen::Map<const Matrix>(v.data(), n1_, r_);
}

Matrix FactorPairModel::y_factor(const Vector& v) const {
  return Eigen::Map<const Matrix>(v.data() + n1_ * r_, n2_, r_);
}

Vector FactorPairModel::pack(const Matrix& x, const Matrix& y) const {
  Vector v(dim());
  Eigen::Map<Matrix>(v.data(), n1_, r_) = x;
  Eigen::Map<Matrix>(v.data() + n1_ * r_, n2_, r_) = y;
  return v;
}

// ---------------------------------------------------------------------------
// SensingEnsemble

double ensemble_quadratic_ratio(const SensingEnsemble& ensemble,
                                const Matrix& t) {
  const double denom = t.squaredNorm();
  if (denom == 0.0) throw ShapeError("quadratic ratio of the zero matrix");
  double acc = 0.0;
  for (const Matrix& a : ensemble.matrices) {
    const double ip = a.cwiseProduct(t).sum();
    acc += ip * ip;
  }
  return acc / (static_cast<double>(ensemble.matrices.size()) * denom);
}

std::optional<double> estimate_lower_bound(const SensingEnsemble& ensemble,
                                           int r, int probe_samples,
                                           uint64_t seed) {
  if (ensemble.matrices.empty()) return std::nullopt;
  const int n1 = static_cast<int>(ensemble.matrices[0].rows());
  const int n2 = static_cast<int>(ensemble.matrices[0].cols());
  double lo = std::numeric_limits<double>::infinity();
  // Coordinate rank-one probes catch sparse degenerate ensembles exactly.
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < n2; ++j) {
      Matrix e = Matrix::Zero(n1, n2);
      e(i, j) = 1.0;
      lo = std::min(lo, ensemble_quadratic_ratio(ensemble, e));
    }
  }
  CounterRng rng(mix64(seed ^ 0x5EED5EEDULL));
  for (int s = 0; s < probe_samples; ++s) {
    Matrix u(n1, r), v(n2, r);
    for (int i = 0; i < n1; ++i)
      for (int j = 0; j < r; ++j) u(i, j) = rng.normal();
    for (int i = 0; i < n2; ++i)
      for (int j = 0; j < r; ++j) v(i, j) = rng.normal();
    lo = std::min(lo, ensemble_quadratic_ratio(ensemble, u * v.transpose()));
  }
  if (!(lo > 1e-9)) return std::nullopt;
  return lo;
}

SensingEnsemble build_sensing_ensemble(uint64_t seed, int m, int n1, int n2,
                                       int r, int probe_samples) {
  if (m < 1 || n1 < 1 || n2 < 1 || r < 1) {
    throw ConfigError("build_sensing_ensemble: all sizes must be >= 1");
  }
  SensingEnsemble e;
  CounterRng rng(mix64(seed));
  e.matrices.reserve(m);
  for (int i = 0; i < m; ++i) {
    Matrix a(n1, n2);
    for (int c = 0; c < n2; ++c)
      for (int rr = 0; rr < n1; ++rr) a(rr, c) = rng.normal();
    e.matrices.push_back(std::move(a));
  }
  Matrix p(n1, r), q(n2, r);
  for (int c = 0; c < r; ++c)
    for (int rr = 0; rr < n1; ++rr) p(rr, c) = rng.normal();
  for (int c = 0; c < r; ++c)
    for (int rr = 0; rr < n2; ++rr) q(rr, c) = rng.normal();
  e.planted = p * q.transpose();
  e.b.resize(m);
  for (int i = 0; i < m; ++i)
    e.b[i] = e.matrices[i].cwiseProduct(e.planted).sum();
  e.lower_bound_c = estimate_lower_bound(e, r, probe_samples, seed);
  if (e.lower_bound_c) {
    // Crude symmetric RIP estimate from the same probes.
    double hi = 0.0;
    CounterRng prng(mix64(seed ^ 0x0DD0BA11ULL));
    for (int s = 0; s < probe_samples; ++s) {
      Matrix u(n1, r), v(n2, r);
      for (int i = 0; i < n1; ++i)
        for (int j = 0; j < r; ++j) u(i, j) = prng.normal();
      for (int i = 0; i < n2; ++i)
        for (int j = 0; j < r; ++j) v(i, j) = prng.normal();
      hi = std::max(hi, ensemble_quadratic_ratio(e, u * v.transpose()));
    }
    double delta = std::max(1.0 - *e.lower_bound_c, hi - 1.0);
    if (delta < 1.0) e.rip_level = std::make_pair(r, delta);
  }
  return e;
}

// ---------------------------------------------------------------------------
// MatrixSensing

MatrixSensing::MatrixSensing(SensingEnsemble ensemble, int n1, int n2, int r)
    : FactorPairModel("matrix-sensing", n1, n2, r, Smoothness::kSmooth),
      ensemble_(std::move(ensemble)) {
  for (const Matrix& a : ensemble_.matrices) {
    if (a.rows() != n1 || a.cols() != n2) {
      throw ShapeError("matrix-sensing: ensemble matrix shape mismatch");
    }
  }
  set_known_infimum(0.0);
}

double MatrixSensing::do_value(const Vector& v) const {
  const Matrix xy = x_factor(v) * y_factor(v).transpose();
  const int m = static_cast<int>(ensemble_.matrices.size());
  double acc = 0.0;
  for (int i = 0; i < m; ++i) {
    const double ri =
        ensemble_.matrices[i].cwiseProduct(xy).sum() - ensemble_.b[i];
    acc += ri * ri;
  }
  return acc / (2.0 * m);
}

SubgradientSelection MatrixSensing::do_subgradient(const Vector& v) const {
  const Matrix x = x_factor(v), y = y_factor(v);
  const Matrix xy = x * y.transpose();
  const int m = static_cast<int>(ensemble_.matrices.size());
  Matrix gx = Matrix::Zero(rows_x(), rank());
  Matrix gy = Matrix::Zero(rows_y(), rank());
  for (int i = 0; i < m; ++i) {
    const Matrix& a = ensemble_.matrices[i];
    const double ri = a.cwiseProduct(xy).sum() - ensemble_.b[i];
    gx.noalias() += ri * (a * y);
    gy.noalias() += ri * (a.transpose() * x);
  }
  return gradient_selection(pack(gx / m, gy / m));
}

// ---------------------------------------------------------------------------
// L1Factorization

L1Factorization::L1Factorization(Matrix m, int r)
    : FactorPairModel("l1-factorization", static_cast<int>(m.rows()),
                      static_cast<int>(m.cols()), r,
                      Smoothness::kPiecewiseSmooth),
      m_(std::move(m)),
      smoothing_(1e-8 * (1.0 + m_.cwiseAbs().maxCoeff())) {
  // 0 is attained when rank(M) <= r and is a valid lower bound regardless.
  set_known_infimum(0.0);
}

double L1Factorization::do_value(const Vector& v) const {
  return (x_factor(v) * y_factor(v).transpose() - m_).cwiseAbs().sum();
}

Matrix L1Factorization::lambda_at(const Vector& v) const {
  Matrix r = x_factor(v) * y_factor(v).transpose() - m_;
  return r.unaryExpr([](double t) { return sign0(t); });
}

SubgradientSelection L1Factorization::do_subgradient(const Vector& v) const {
  const Matrix x = x_factor(v), y = y_factor(v);
  const Matrix r = x * y.transpose() - m_;
  const Matrix lambda = r.unaryExpr([](double t) { return sign0(t); });
  SubgradientSelection s;
  s.vector = pack(lambda * y, lambda.transpose() * x);
  s.is_unique = (r.array() != 0.0).all();
  s.selection_rule = kKinkRule;
  return s;
}

std::optional<Vector> L1Factorization::solve_prox(const Vector& v, double tau,
                                                  double inner_tol,
                                                  int inner_max_iters) const {
  const int n1 = rows_x(), n2 = rows_y(), r = rank(), d = dim();
  const double mu = smoothing_;
  const Matrix a = x_factor(v), b = y_factor(v);
  Matrix x = a, y = b;

  auto smooth_obj = [&](const Matrix& xx, const Matrix& yy) {
    const Matrix res = xx * yy.transpose() - m_;
    double val = ((res.array().square() + mu * mu).sqrt() - mu).sum();
    val += ((xx - a).squaredNorm() + (yy - b).squaredNorm()) / (2.0 * tau);
    return val;
  };

  double fcur = smooth_obj(x, y);
  for (int it = 0; it < inner_max_iters; ++it) {
    const Matrix res = x * y.transpose() - m_;
    const Matrix s = (res.array().square() + mu * mu).sqrt().matrix();
    const Matrix lam = res.cwiseQuotient(s);                    // phi'
    const Matrix w = (mu * mu) * s.array().pow(-3).matrix();    // phi''

    Matrix gx = lam * y + (x - a) / tau;
    Matrix gy = lam.transpose() * x + (y - b) / tau;
    Vector grad = pack(gx, gy);
    const double gnorm = grad.norm();
    if (gnorm <= inner_tol) return pack(x, y);

    // Dense Newton system over the flattened (X, Y) pair.
    Matrix h = Matrix::Zero(d, d);
    auto xi = [&](int i, int c) { return c * n1 + i; };
    auto yi = [&](int j, int c) { return n1 * r + c * n2 + j; };
    for (int i = 0; i < n1; ++i)
      for (int ca = 0; ca < r; ++ca)
        for (int cb = 0; cb < r; ++cb) {
          double acc = 0.0;
          for (int j = 0; j < n2; ++j) acc += w(i, j) * y(j, ca) * y(j, cb);
          h(xi(i, ca), xi(i, cb)) += acc;
        }
    for (int j = 0; j < n2; ++j)
      for (int ca = 0; ca < r; ++ca)
        for (int cb = 0; cb < r; ++cb) {
          double acc = 0.0;
          for (int i = 0; i < n1; ++i) acc += w(i, j) * x(i, ca) * x(i, cb);
          h(yi(j, ca), yi(j, cb)) += acc;
        }
    for (int i = 0; i < n1; ++i)
      for (int j = 0; j < n2; ++j)
        for (int ca = 0; ca < r; ++ca)
          for (int cb = 0; cb < r; ++cb) {
            double t = w(i, j) * y(j, ca) * x(i, cb);
            if (ca == cb) t += lam(i, j);
            h(xi(i, ca), yi(j, cb)) += t;
            h(yi(j, cb), xi(i, ca)) += t;
          }
    h.diagonal().array() += 1.0 / tau;

    Vector dir = h.ldlt().solve(-grad);
    if (!dir.allFinite() || grad.dot(dir) >= 0.0) dir = -grad;

    double step = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Matrix xn = x + step * Eigen::Map<const Matrix>(dir.data(), n1, r);
      const Matrix yn =
          y + step * Eigen::Map<const Matrix>(dir.data() + n1 * r, n2, r);
      const double fn = smooth_obj(xn, yn);
      if (fn < fcur) {
        x = xn;
        y = yn;
        fcur = fn;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) return pack(x, y);  // at numerical stationarity
  }
  Vector best = pack(x, y);
  const double fv = value(best);
  const double cert = fv + (best - v).squaredNorm() / (2.0 * tau);
  if (cert <= value(v) + 1e-12 * (1.0 + std::abs(fv))) return best;
  throw ProxInnerError("l1-factorization prox: no certificate after " +
                           std::to_string(inner_max_iters) + " iterations",
                       best, fv, (best - v).norm() / tau);
}

// ---------------------------------------------------------------------------
// LinearNet

namespace {
std::string dims_string(const std::vector<int>& dims) {
  std::string s = "d=(";
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + ")";
}

int total_weight_dim(const std::vector<int>& dims) {
  int n = 0;
  for (size_t i = 1; i < dims.size(); ++i) n += dims[i] * dims[i - 1];
  return n;
}
}  // namespace

LinearNet::LinearNet(std::vector<int> dims, Matrix x_data, Matrix y_data,
                     std::optional<double> infimum)
    : LossModel("linear-nn", total_weight_dim(dims), Smoothness::kSmooth,
                dims_string(dims)),
      dims_(std::move(dims)),
      x_data_(std::move(x_data)),
      y_data_(std::move(y_data)) {
  if (dims_.size() < 2) throw ConfigError("linear-nn: needs at least 1 layer");
  if (x_data_.rows() != dims_.front() || y_data_.rows() != dims_.back() ||
      x_data_.cols() != y_data_.cols()) {
    throw ShapeError("linear-nn: data shapes inconsistent with dims");
  }
  if (infimum) set_known_infimum(*infimum);
}

std::vector<Matrix> LinearNet::weights(const Vector& v) const {
  std::vector<Matrix> w;
  w.reserve(dims_.size() - 1);
  int off = 0;
  for (size_t i = 1; i < dims_.size(); ++i) {
    const int rows = dims_[i], cols = dims_[i - 1];
    w.emplace_back(Eigen::Map<const Matrix>(v.data() + off, rows, cols));
    off += rows * cols;
  }
  return w;
}

Vector LinearNet::pack(const std::vector<Matrix>& w) const {
  Vector v(dim());
  int off = 0;
  for (const Matrix& wi : w) {
    Eigen::Map<Matrix>(v.data() + off, wi.rows(), wi.cols()) = wi;
    off += static_cast<int>(wi.size());
  }
  return v;
}

Matrix LinearNet::residual(const std::vector<Matrix>& w) const {
  Matrix p = x_data_;
  for (const Matrix& wi : w) p = wi * p;
  return p - y_data_;
}

double LinearNet::do_value(const Vector& v) const {
  return 0.5 * residual(weights(v)).squaredNorm();
}

SubgradientSelection LinearNet::do_subgradient(const Vector& v) const {
  const std::vector<Matrix> w = weights(v);
  const int layers = static_cast<int>(w.size());
  // Forward products p[i] = W_i ... W_1 X  (p[0] = X).
  std::vector<Matrix> p(layers + 1);
  p[0] = x_data_;
  for (int i = 0; i < layers; ++i) p[i + 1] = w[i] * p[i];
  const Matrix e = p[layers] - y_data_;
  // Backward suffix s = W_L^T ... applied to the residual.
  std::vector<Matrix> g(layers);
  Matrix s = e;
  for (int i = layers - 1; i >= 0; --i) {
    g[i] = s * p[i].transpose();
    if (i > 0) s = w[i].transpose() * s;
  }
  return gradient_selection(pack(g));
}

}  // namespace flowscape
