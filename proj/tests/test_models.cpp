#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>

#include "flowscape/models.hpp"
#include "flowscape/registry.hpp"
#include "flowscape/rng.hpp"

using namespace flowscape;

namespace {

// Independent central-difference gradient used as the test-side oracle.
Vector fd_gradient(const LossModel& model, const Vector& x) {
  const double hs = std::cbrt(std::numeric_limits<double>::epsilon());
  Vector g(x.size());
  Vector xp = x, xm = x;
  for (int i = 0; i < x.size(); ++i) {
    const double h = hs * (1.0 + std::abs(x[i]));
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    g[i] = (model.value(xp) - model.value(xm)) / (xp[i] - xm[i]);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return g;
}

Matrix fd_hessian(const LossModel& model, const Vector& x) {
  const double hs = std::cbrt(std::numeric_limits<double>::epsilon());
  Matrix h(x.size(), x.size());
  Vector xp = x, xm = x;
  for (int i = 0; i < x.size(); ++i) {
    const double step = hs * (1.0 + std::abs(x[i]));
    xp[i] = x[i] + step;
    xm[i] = x[i] - step;
    h.col(i) = (fd_gradient(model, xp) - fd_gradient(model, xm)) /
               (xp[i] - xm[i]);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return 0.5 * (h + h.transpose());
}

Vector random_point(CounterRng& rng, int dim, double radius) {
  Vector x(dim);
  for (int i = 0; i < dim; ++i) x[i] = rng.uniform(-radius, radius);
  return x;
}

}  // namespace

TEST_CASE("completion model values at the named points") {
  MatrixCompletionEx1 mc;
  CHECK(mc.value(Vector::Zero(4)) == doctest::Approx(3.0).epsilon(1e-14));
  Vector ones = Vector::Ones(4);
  CHECK(mc.value(ones) == doctest::Approx(0.0).epsilon(1e-14));

  // Critical values on parametric samples of the four components.
  for (double t : {-3.0, -1.0, -0.5, 0.5, 1.0, 2.0}) {
    CHECK(std::abs(mc.value(MatrixCompletionEx1::c1_point(t)) - 0.0) <= 1e-12);
    CHECK(std::abs(mc.value(MatrixCompletionEx1::c2_point(t)) - 2.0) <= 1e-12);
    CHECK(std::abs(mc.value(MatrixCompletionEx1::c3_point(t)) - 2.0) <= 1e-12);
  }
  CHECK(std::abs(mc.value(MatrixCompletionEx1::c4_point()) - 3.0) <= 1e-12);

  // Gradients vanish on all four components.
  for (double t : {-2.0, 0.7, 1.0, 3.0}) {
    CHECK(mc.subgradient(MatrixCompletionEx1::c1_point(t)).vector.norm() <=
          1e-12);
    CHECK(mc.subgradient(MatrixCompletionEx1::c2_point(t)).vector.norm() <=
          1e-12);
    CHECK(mc.subgradient(MatrixCompletionEx1::c3_point(t)).vector.norm() <=
          1e-12);
  }
  CHECK(mc.subgradient(MatrixCompletionEx1::c4_point()).vector.norm() == 0.0);
}

TEST_CASE("completion model subgradient at the origin is the zero vector") {
  MatrixCompletionEx1 mc;
  SubgradientSelection s = mc.subgradient(Vector::Zero(4));
  CHECK(s.vector.norm() == 0.0);
  CHECK(s.is_unique);
}

TEST_CASE("input validation") {
  MatrixCompletionEx1 mc;
  CHECK_THROWS_AS(mc.value(Vector::Zero(3)), ShapeError);
  Vector bad = Vector::Zero(4);
  bad[2] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(mc.value(bad), ShapeError);
  bad[2] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(mc.subgradient(bad), ShapeError);
}

TEST_CASE("hessian is rejected on piecewise-smooth models") {
  ReluToy relu;
  CHECK_THROWS_AS(relu.hessian(Vector::Zero(2)), UnsupportedOperation);
  L1NormModel l1(3);
  CHECK_THROWS_AS(l1.hessian(Vector::Zero(3)), UnsupportedOperation);
}

TEST_CASE("gradients match central differences on every smooth model") {
  std::vector<ModelPtr> zoo = {
      make_model("matrix-completion-ex1"),
      make_model("quadratic-bowl", nlohmann::json{{"dim", 3}}),
      make_model("sigmoid-two-data"),
      make_model("sigmoid-two-data-asym"),
      make_model("sigmoid-chain"),
      make_model("linear-nn"),
      make_model("matrix-sensing"),
      make_model("cex-unbounded"),
      make_model("cex-infinite-critical"),
  };
  for (const auto& model : zoo) {
    CAPTURE(model->name());
    CHECK(model->smoothness() == Smoothness::kSmooth);
    CounterRng rng(substream_key(101, 7));
    for (int trial = 0; trial < 100; ++trial) {
      const Vector x = random_point(rng, model->dim(), 2.0);
      const SubgradientSelection s = model->subgradient(x);
      CHECK(s.is_unique);
      const Vector g_fd = fd_gradient(*model, x);
      const double err = (s.vector - g_fd).norm();
      CHECK(err <= 1e-5 * (1.0 + s.vector.norm()));
      if (model->known_infimum()) {
        CHECK(model->value(x) >= *model->known_infimum() - 1e-12);
      }
    }
  }
}

TEST_CASE("piecewise-smooth selections match differences away from kinks") {
  std::vector<ModelPtr> zoo = {
      make_model("relu-toy"),
      make_model("l1-norm", nlohmann::json{{"dim", 4}}),
      make_model("l1-factorization"),
      make_model("oscillatory"),
  };
  for (const auto& model : zoo) {
    CAPTURE(model->name());
    CounterRng rng(substream_key(102, 3));
    int checked = 0;
    for (int trial = 0; trial < 200 && checked < 60; ++trial) {
      const Vector x = random_point(rng, model->dim(), 2.0);
      const SubgradientSelection s = model->subgradient(x);
      if (!s.is_unique) continue;
      // Oscillatory differentiation degrades near the essential oscillation;
      // only probe where the derivative is tame.
      if (model->name() == "oscillatory" && std::abs(x[0]) < 0.05) continue;
      const Vector g_fd = fd_gradient(*model, x);
      CHECK((s.vector - g_fd).norm() <= 1e-4 * (1.0 + s.vector.norm()));
      ++checked;
    }
    CHECK(checked >= 30);
  }
}

TEST_CASE("sigmoid is stable and satisfies the symmetry identity") {
  CHECK(sigmoid(0.0) == 0.5);
  CounterRng rng(substream_key(7, 7));
  for (int i = 0; i < 200; ++i) {
    const double z = rng.uniform(-30.0, 30.0);
    CHECK(std::abs(sigmoid(z) + sigmoid(-z) - 1.0) <= 1e-15);
  }
  CHECK(sigmoid(800.0) == 1.0);  // no overflow
  CHECK(sigmoid(-800.0) == 0.0);
}

TEST_CASE("two-data sigmoid model value and infimum") {
  SigmoidTwoData f(1.0, -1.0);
  CHECK(f.value(Vector::Zero(2)) == doctest::Approx(1.0).epsilon(1e-14));
  REQUIRE(f.known_infimum());
  CHECK(*f.known_infimum() == doctest::Approx(0.5).epsilon(1e-9));

  SigmoidTwoData g(1.0, -3.0);
  REQUIRE(g.known_infimum());
  CHECK(*g.known_infimum() == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("unbounded counterexample: derivative and implicit solution") {
  CexUnbounded f;
  // f'(1) = 1, cross-checked against a plain central difference with h=1e-6.
  Vector one = Vector::Ones(1);
  const double analytic = f.subgradient(one).vector[0];
  const double h = 1e-6;
  Vector xp(1), xm(1);
  xp[0] = 1.0 + h;
  xm[0] = 1.0 - h;
  const double fd = (f.value(xp) - f.value(xm)) / (2.0 * h);
  CHECK(std::abs(fd - 1.0) <= 1e-6);
  CHECK(std::abs(analytic - fd) <= 1e-6);

  // g'(x) equals the reciprocal of the flow speed:
  // g'(x) = (x^4+1)^2 / (x (x^4 - 2x^2 - 1)), checked by differencing g.
  for (double x : {2.0, 2.5, 3.0, 4.0}) {
    const double gh = 1e-6 * (1.0 + x);
    const double dg = (CexUnbounded::implicit_g(x + gh) -
                       CexUnbounded::implicit_g(x - gh)) /
                      (2.0 * gh);
    const double x2 = x * x, x4 = x2 * x2;
    const double expected = (x4 + 1.0) * (x4 + 1.0) / (x * (x4 - 2.0 * x2 - 1.0));
    CHECK(dg == doctest::Approx(expected).epsilon(1e-7));
  }

  // Critical points: 0 and +-(sqrt(2)-1)^{-1/2}.
  const double xc = 1.0 / std::sqrt(std::sqrt(2.0) - 1.0);
  Vector vc(1);
  vc[0] = xc;
  CHECK(std::abs(f.subgradient(vc).vector[0]) <= 1e-12);
  CHECK(f.value(vc) == doctest::Approx(0.5 * (std::sqrt(2.0) + 1.0)));
}

TEST_CASE("infinite-critical-value example: branch values and smoothness") {
  CHECK(CexInfiniteCritical::value_at(-4.0) == -8.0);
  CHECK(CexInfiniteCritical::value_at(0.0) == 0.0);
  CHECK(CexInfiniteCritical::value_at(2.0) == doctest::Approx(-1.5));
  CHECK(CexInfiniteCritical::value_at(4.0) == doctest::Approx(-2.25));
  CHECK(CexInfiniteCritical::value_at(1.0) == doctest::Approx(-1.0));
  CHECK(CexInfiniteCritical::value_at(9.0) == doctest::Approx(-2.875));

  // Critical points at -4 and the even integers.
  CHECK(CexInfiniteCritical::derivative_at(-4.0) == 0.0);
  for (int k = 0; k <= 4; ++k) {
    CHECK(std::abs(CexInfiniteCritical::derivative_at(2.0 * k)) <= 1e-15);
    CHECK(CexInfiniteCritical::value_at(2.0 * k) ==
          doctest::Approx(-3.0 * (1.0 - std::ldexp(1.0, -k))));
  }

  // Continuity and C^1 joins across branch boundaries.
  for (double x : {-2.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0}) {
    const double eps = 1e-9;
    CHECK(std::abs(CexInfiniteCritical::value_at(x - eps) -
                   CexInfiniteCritical::value_at(x + eps)) <= 1e-7);
    CHECK(std::abs(CexInfiniteCritical::derivative_at(x - eps) -
                   CexInfiniteCritical::derivative_at(x + eps)) <= 1e-6);
  }
}

TEST_CASE("completion hessian: analytic equals differenced, origin spectrum") {
  MatrixCompletionEx1 mc;
  CounterRng rng(substream_key(55, 1));
  for (int i = 0; i < 20; ++i) {
    const Vector x = random_point(rng, 4, 2.0);
    CHECK((mc.hessian(x) - fd_hessian(mc, x)).norm() <=
          1e-5 * (1.0 + mc.hessian(x).norm()));
  }

  // Spectrum at the origin: +-(sqrt(5)+1), +-(sqrt(5)-1) (computed from the
  // differenced Hessian as the independent route).
  Eigen::SelfAdjointEigenSolver<Matrix> es(fd_hessian(mc, Vector::Zero(4)));
  Vector eig = es.eigenvalues();
  const double s5 = std::sqrt(5.0);
  CHECK(eig[0] == doctest::Approx(-(s5 + 1.0)).epsilon(1e-5));
  CHECK(eig[1] == doctest::Approx(-(s5 - 1.0)).epsilon(1e-5));
  CHECK(eig[2] == doctest::Approx(s5 - 1.0).epsilon(1e-5));
  CHECK(eig[3] == doctest::Approx(s5 + 1.0).epsilon(1e-5));
  CHECK(eig[0] < -1.0);
  CHECK(eig[3] > 1.0);

  // On the global component the Hessian is PSD with a kernel along the
  // component's tangent direction.
  Vector p = MatrixCompletionEx1::c1_point(1.0);
  Eigen::SelfAdjointEigenSolver<Matrix> es1(mc.hessian(p));
  CHECK(es1.eigenvalues().minCoeff() >= -1e-8);
  CHECK(std::abs(es1.eigenvalues().minCoeff()) <= 1e-8);
  Vector tangent(4);
  tangent << 1.0, 1.0, -1.0, -1.0;  // d/dt (t, t, 1/t, 1/t) at t=1
  CHECK((mc.hessian(p) * tangent).norm() <= 1e-10);
}

TEST_CASE("quadratic bowl hessian is the identity") {
  QuadraticBowl bowl(3);
  Vector x(3);
  x << 0.3, -1.0, 2.0;
  CHECK((bowl.hessian(x) - Matrix::Identity(3, 3)).norm() == 0.0);
}

TEST_CASE("l1 factorization: multiplier membership and zero selection") {
  auto model = std::make_shared<L1Factorization>(
      (Vector(2) << 1.0, 2.0).finished() *
          (Vector(2) << 1.0, -1.0).finished().transpose(),
      1);
  CounterRng rng(substream_key(9, 9));
  for (int i = 0; i < 100; ++i) {
    const Vector v = random_point(rng, model->dim(), 2.0);
    const Matrix lam = model->lambda_at(v);
    const Matrix res =
        model->x_factor(v) * model->y_factor(v).transpose() - model->data();
    for (int r = 0; r < lam.rows(); ++r) {
      for (int c = 0; c < lam.cols(); ++c) {
        CHECK(lam(r, c) >= -1.0);
        CHECK(lam(r, c) <= 1.0);
        if (res(r, c) != 0.0) {
          CHECK(lam(r, c) == (res(r, c) > 0 ? 1.0 : -1.0));
        }
      }
    }
  }

  // At an exact factorization the selection is the zero vector.
  Vector exact = model->pack((Vector(2) << 1.0, 2.0).finished(),
                             (Vector(2) << 1.0, -1.0).finished());
  SubgradientSelection s = model->subgradient(exact);
  CHECK(s.vector.norm() == 0.0);
  CHECK_FALSE(s.is_unique);
  CHECK(s.selection_rule == "zero-at-kink");
}

TEST_CASE("factor pack/unpack round trip is column-major, X first") {
  L1Factorization model(Matrix::Ones(2, 3), 2);
  Matrix x(2, 2), y(3, 2);
  x << 1, 3, 2, 4;          // column-major flattening: 1,2,3,4
  y << 5, 8, 6, 9, 7, 10;   // 5,6,7,8,9,10
  Vector v = model.pack(x, y);
  for (int i = 0; i < 4; ++i) CHECK(v[i] == 1.0 + i);
  for (int i = 0; i < 6; ++i) CHECK(v[4 + i] == 5.0 + i);
  CHECK(model.x_factor(v) == x);
  CHECK(model.y_factor(v) == y);
}

TEST_CASE("linear net: weights round trip and zero-data degeneracy") {
  auto nn = std::dynamic_pointer_cast<const LinearNet>(make_model("linear-nn"));
  REQUIRE(nn);
  CHECK(nn->dim() == 15);  // 3x3 + 2x3
  CounterRng rng(substream_key(12, 0));
  const Vector v = random_point(rng, nn->dim(), 1.0);
  const auto w = nn->weights(v);
  CHECK(w.size() == 2);
  CHECK(w[0].rows() == 3);
  CHECK(w[1].rows() == 2);
  CHECK(nn->pack(w) == v);
  // Default data: third column of X is zero, so rank(X) = 2.
  CHECK(nn->x_data().col(2).norm() == 0.0);
  CHECK(Eigen::FullPivLU<Matrix>(nn->x_data()).rank() == 2);
  // Reachable targets: the infimum 0 is recorded.
  REQUIRE(nn->known_infimum());

  // With X = 0 the whole gradient vanishes.
  LinearNet degenerate({3, 3, 2}, Matrix::Zero(3, 3), Matrix::Ones(2, 3));
  CHECK(degenerate.subgradient(v).vector.norm() == 0.0);
}

TEST_CASE("sensing ensemble: construction, planted residuals, lower bound") {
  SensingEnsemble e = build_sensing_ensemble(0, 20, 3, 3, 1, 1000);
  CHECK(e.matrices.size() == 20);
  REQUIRE(e.lower_bound_c);
  CHECK(*e.lower_bound_c > 0.0);
  // The planted matrix reproduces the right-hand sides exactly.
  for (int i = 0; i < 20; ++i) {
    CHECK(std::abs(e.matrices[i].cwiseProduct(e.planted).sum() - e.b[i]) <=
          1e-12 * (1.0 + std::abs(e.b[i])));
  }
  // Independent random rank-1 probes all sit above zero.
  CounterRng rng(substream_key(77, 3));
  for (int s = 0; s < 200; ++s) {
    Vector u(3), v(3);
    for (int i = 0; i < 3; ++i) {
      u[i] = rng.normal();
      v[i] = rng.normal();
    }
    CHECK(ensemble_quadratic_ratio(e, u * v.transpose()) > 0.0);
  }

  // Deterministic: same seed, same ensemble.
  SensingEnsemble e2 = build_sensing_ensemble(0, 20, 3, 3, 1, 1000);
  CHECK(e2.b == e.b);
  CHECK(e2.planted == e.planted);

  // A single coordinate measurement is not lower bounded.
  SensingEnsemble bad;
  Matrix a = Matrix::Zero(3, 3);
  a(0, 0) = 1.0;
  bad.matrices.push_back(a);
  bad.b = Vector::Zero(1);
  bad.planted = Matrix::Zero(3, 3);
  Matrix probe = Matrix::Zero(3, 3);
  probe(1, 1) = 1.0;
  CHECK(ensemble_quadratic_ratio(bad, probe) == 0.0);
  CHECK_FALSE(estimate_lower_bound(bad, 1, 500, 0).has_value());
}

TEST_CASE("sensing model value/gradient consistency with a tiny ensemble") {
  SensingEnsemble e = build_sensing_ensemble(3, 5, 2, 2, 1, 200);
  MatrixSensing model(e, 2, 2, 1);
  // Value at the planted factorization is zero (planted is rank 1).
  Eigen::JacobiSVD<Matrix> svd(e.planted,
                               Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double s0 = svd.singularValues()[0];
  Vector packed = model.pack(svd.matrixU().col(0) * std::sqrt(s0),
                             svd.matrixV().col(0) * std::sqrt(s0));
  CHECK(model.value(packed) <= 1e-20);
}

TEST_CASE("registry: known names resolve, unknown names are config errors") {
  const auto names = registered_models();
  CHECK(names.size() >= 12);
  for (const std::string& n : names) {
    CHECK(make_model(n) != nullptr);
  }
  CHECK_THROWS_AS(make_model("no-such-model"), ConfigError);
  CHECK_THROWS_AS(
      make_model("linear-nn", nlohmann::json{{"dims", {3}}}), ConfigError);
}

TEST_CASE("relu toy values") {
  ReluToy relu;
  Vector v(2);
  v << -1.0, 5.0;
  CHECK(relu.value(v) == 1.0);  // inactive unit
  v << 2.0, 0.5;
  CHECK(relu.value(v) == 0.0);  // on the hyperbola x1 x2 = 1
  v << 0.0, 3.0;
  SubgradientSelection s = relu.subgradient(v);
  CHECK(s.vector.norm() == 0.0);
  CHECK_FALSE(s.is_unique);
}

TEST_CASE("oscillatory model basics") {
  Oscillatory osc;
  Vector v(1);
  v[0] = -0.5;
  CHECK(osc.value(v) == 0.0);
  v[0] = 1.0 / (3.14159265358979323846);  // sin(pi / 1) scale; f(1/pi) ~ 0
  CHECK(std::abs(osc.value(v)) <= 1e-16);
  v[0] = 0.0;
  CHECK_FALSE(osc.subgradient(v).is_unique);
}
