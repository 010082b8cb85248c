#include "flowscape/flows.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flowscape/rng.hpp"

namespace flowscape {

const char* to_string(Method m) {
  switch (m) {
    case Method::kEuler: return "euler";
    case Method::kFlow: return "flow";
    case Method::kProx: return "prox";
  }
  return "?";
}

const char* to_string(TerminationReason r) {
  switch (r) {
    case TerminationReason::kHorizon: return "horizon";
    case TerminationReason::kCriticalTol: return "critical_tol";
    case TerminationReason::kDivergenceGuard: return "divergence_guard";
  }
  return "?";
}

void TrajectoryRecord::append(double t, Vector state, double value,
                              double step_norm, double grad_norm) {
  times.push_back(t);
  states.push_back(std::move(state));
  values.push_back(value);
  step_norms.push_back(step_norm);
  grad_norms.push_back(grad_norm);
}

// ---------------------------------------------------------------------------
// Fixed-step subgradient descent

TrajectoryRecord euler_descent(const LossModel& model, const Vector& x0,
                               double step, int max_iters,
                               const GuardSettings& guards,
                               int record_stride) {
  if (step <= 0.0) throw ConfigError("euler_descent: step must be positive");
  if (max_iters < 1) throw ConfigError("euler_descent: max_iters must be >= 1");
  if (record_stride < 1) record_stride = 1;

  TrajectoryRecord rec;
  rec.method = Method::kEuler;
  rec.terminated_by = TerminationReason::kHorizon;

  Vector x = x0;
  Vector x_prev = x0;
  double last_recorded_step = 0.0;
  for (int k = 0;; ++k) {
    const double value = model.value(x);
    if (!std::isfinite(value)) {
      rec.terminated_by = TerminationReason::kDivergenceGuard;
      break;
    }
    const Vector g = model.subgradient(x).vector;
    const double gnorm = g.norm();
    const double stepnorm = (k == 0) ? 0.0 : (x - x_prev).norm();
    const bool at_critical = gnorm <= guards.critical_tol;
    const bool diverged = x.norm() >= guards.divergence_guard;
    const bool done = k == max_iters || at_critical || diverged;
    if (k % record_stride == 0 || done) {
      rec.append(static_cast<double>(k), x, value, stepnorm, gnorm);
      last_recorded_step = stepnorm;
    }
    (void)last_recorded_step;
    if (done) {
      if (at_critical) rec.terminated_by = TerminationReason::kCriticalTol;
      if (diverged) rec.terminated_by = TerminationReason::kDivergenceGuard;
      break;
    }
    x_prev = x;
    x.noalias() -= step * g;
    if (!x.allFinite()) {
      rec.terminated_by = TerminationReason::kDivergenceGuard;
      break;
    }
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4) with cubic Hermite dense output

namespace {

struct Dopri5 {
  // Butcher tableau.
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5,
                          c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                          a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                          a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // 5th-order minus embedded 4th-order weights (error estimator).
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695,
                          e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
};

struct FlowState {
  std::vector<double> node_t;
  std::vector<Vector> node_x;
  std::vector<Vector> node_d;  // derivative -grad f at the node
  std::vector<double> node_value;
  TerminationReason terminated = TerminationReason::kHorizon;
};

// Integrates to t_end, collecting accepted nodes with derivatives.
FlowState integrate_dopri5(const LossModel& model, const Vector& x0,
                           double t_end, const FlowOptions& opts) {
  if (model.smoothness() != Smoothness::kSmooth) {
    throw StructureError("gradient_flow: model '" + model.name() +
                         "' is not smooth; use minimizing_movement");
  }
  if (t_end <= 0.0) throw ConfigError("gradient_flow: t_end must be positive");
  if (opts.rel_tol <= 0.0 || opts.abs_tol <= 0.0) {
    throw ConfigError("gradient_flow: tolerances must be positive");
  }

  auto rhs = [&model](const Vector& x) -> Vector {
    return -model.subgradient(x).vector;
  };

  FlowState st;
  double t = 0.0;
  Vector x = x0;
  Vector k1 = rhs(x);
  st.node_t.push_back(t);
  st.node_x.push_back(x);
  st.node_d.push_back(k1);
  st.node_value.push_back(model.value(x));

  if (k1.norm() <= opts.guards.critical_tol) {
    st.terminated = TerminationReason::kCriticalTol;
    return st;
  }

  // Initial step from the usual curvature-free heuristic.
  double h = 0.01 * (1.0 + x.norm()) / (1.0 + k1.norm());
  h = std::min(h, t_end);

  const int n = static_cast<int>(x.size());
  Vector k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), x5(n), err(n);

  for (long step_count = 0; step_count < opts.max_steps; ++step_count) {
    if (t >= t_end) break;
    h = std::min(h, t_end - t);
    if (h < 1e-14 * std::max(1.0, std::abs(t))) {
      // Step size underflow (blow-up); keep the last valid state.
      st.terminated = TerminationReason::kDivergenceGuard;
      return st;
    }

    using D = Dopri5;
    k2 = rhs(x + h * (D::a21 * k1));
    k3 = rhs(x + h * (D::a31 * k1 + D::a32 * k2));
    k4 = rhs(x + h * (D::a41 * k1 + D::a42 * k2 + D::a43 * k3));
    k5 = rhs(x + h * (D::a51 * k1 + D::a52 * k2 + D::a53 * k3 + D::a54 * k4));
    k6 = rhs(x + h * (D::a61 * k1 + D::a62 * k2 + D::a63 * k3 + D::a64 * k4 +
                      D::a65 * k5));
    x5 = x + h * (D::b1 * k1 + D::b3 * k3 + D::b4 * k4 + D::b5 * k5 +
                  D::b6 * k6);
    if (!x5.allFinite()) {
      h *= 0.25;
      continue;
    }
    k7 = rhs(x5);  // FSAL
    err = h * (D::e1 * k1 + D::e3 * k3 + D::e4 * k4 + D::e5 * k5 + D::e6 * k6 +
               D::e7 * k7);

    double err_norm = 0.0;
    for (int i = 0; i < n; ++i) {
      const double scale =
          opts.abs_tol +
          opts.rel_tol * std::max(std::abs(x[i]), std::abs(x5[i]));
      const double q = err[i] / scale;
      err_norm += q * q;
    }
    err_norm = std::sqrt(err_norm / n);

    if (err_norm <= 1.0) {
      t += h;
      x = x5;
      k1 = k7;
      st.node_t.push_back(t);
      st.node_x.push_back(x);
      st.node_d.push_back(k1);
      st.node_value.push_back(model.value(x));

      if (x.norm() >= opts.guards.divergence_guard) {
        st.terminated = TerminationReason::kDivergenceGuard;
        return st;
      }
      if (k1.norm() <= opts.guards.critical_tol) {
        st.terminated = TerminationReason::kCriticalTol;
        return st;
      }
    }
    const double factor =
        err_norm == 0.0
            ? 5.0
            : std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 5.0);
    h *= factor;
  }
  if (t < t_end) {
    throw NumericError("gradient_flow: exceeded max_steps before t_end");
  }
  st.terminated = TerminationReason::kHorizon;
  return st;
}

Vector hermite(const FlowState& st, size_t seg, double t) {
  const double t0 = st.node_t[seg], t1 = st.node_t[seg + 1];
  const double h = t1 - t0;
  const double th = (t - t0) / h;
  const double th2 = th * th, th3 = th2 * th;
  const double h00 = 2 * th3 - 3 * th2 + 1;
  const double h10 = th3 - 2 * th2 + th;
  const double h01 = -2 * th3 + 3 * th2;
  const double h11 = th3 - th2;
  return h00 * st.node_x[seg] + (h10 * h) * st.node_d[seg] +
         h01 * st.node_x[seg + 1] + (h11 * h) * st.node_d[seg + 1];
}

}  // namespace

TrajectoryRecord gradient_flow(const LossModel& model, const Vector& x0,
                               double t_end, const FlowOptions& opts) {
  FlowState st = integrate_dopri5(model, x0, t_end, opts);
  TrajectoryRecord rec;
  rec.method = Method::kFlow;
  rec.terminated_by = st.terminated;
  for (size_t i = 0; i < st.node_t.size(); ++i) {
    const double stepn =
        i == 0 ? 0.0 : (st.node_x[i] - st.node_x[i - 1]).norm();
    rec.append(st.node_t[i], st.node_x[i], st.node_value[i], stepn,
               st.node_d[i].norm());
  }
  return rec;
}

TrajectoryRecord gradient_flow_sampled(const LossModel& model,
                                       const Vector& x0, double t_end,
                                       std::span<const double> sample_times,
                                       const FlowOptions& opts) {
  for (size_t i = 1; i < sample_times.size(); ++i) {
    if (!(sample_times[i] > sample_times[i - 1])) {
      throw ConfigError("sample_times must be strictly increasing");
    }
  }
  FlowState st = integrate_dopri5(model, x0, t_end, opts);
  const double t_last = st.node_t.back();

  TrajectoryRecord rec;
  rec.method = Method::kFlow;
  rec.terminated_by = st.terminated;
  size_t seg = 0;
  Vector prev;
  for (double ts : sample_times) {
    if (ts < 0.0 || ts > t_last) continue;  // outside the computed range
    while (seg + 2 < st.node_t.size() && st.node_t[seg + 1] < ts) ++seg;
    Vector xs = st.node_t.size() == 1 ? st.node_x[0] : hermite(st, seg, ts);
    const double stepn = rec.states.empty() ? 0.0 : (xs - prev).norm();
    const double gn = model.subgradient(xs).vector.norm();
    const double val = model.value(xs);
    prev = xs;
    rec.append(ts, std::move(xs), val, stepn, gn);
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Proximal minimizing movement

namespace {

// Generic inner solver: descent with backtracking on
// F(z) = f(z) + |z - x_k|^2 / (2 tau), started at z = x_k.
Vector prox_inner_descent(const LossModel& model, const Vector& x_k,
                          double tau, double inner_tol, int inner_max_iters) {
  Vector z = x_k;
  const double f_k = model.value(x_k);
  double fz = f_k;
  auto obj = [&](const Vector& w) {
    return model.value(w) + (w - x_k).squaredNorm() / (2.0 * tau);
  };
  double cur = fz;  // F(x_k) = f(x_k)
  double step = tau;
  const double step_floor = 1e-14 * (1.0 + x_k.norm());
  for (int it = 0; it < inner_max_iters; ++it) {
    Vector gF = model.subgradient(z).vector + (z - x_k) / tau;
    const double gn = gF.norm();
    if (gn <= inner_tol) return z;
    bool accepted = false;
    for (int ls = 0; ls < 60 && step * gn > step_floor; ++ls) {
      Vector zn = z - step * gF;
      const double fn = obj(zn);
      if (fn < cur - 0.25 * step * gn * gn) {
        z = std::move(zn);
        cur = fn;
        accepted = true;
        step *= 1.5;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No further descent representable: stationary for our purposes.
      break;
    }
  }
  const double fz_final = model.value(z);
  const double cert = fz_final + (z - x_k).squaredNorm() / (2.0 * tau);
  if (cert <= f_k + 1e-12 * (1.0 + std::abs(f_k))) return z;
  throw ProxInnerError(
      "prox_step: inner solver exhausted without a descent certificate", z,
      fz_final, (model.subgradient(z).vector + (z - x_k) / tau).norm());
}

}  // namespace

Vector prox_step(const LossModel& model, const Vector& x_k, double tau,
                 double inner_tol, int inner_max_iters) {
  if (tau <= 0.0) throw ConfigError("prox_step: tau must be positive");
  if (auto z = model.solve_prox(x_k, tau, inner_tol, inner_max_iters)) {
    return *z;
  }
  return prox_inner_descent(model, x_k, tau, inner_tol, inner_max_iters);
}

ProxTrajectory::ProxTrajectory(std::vector<Vector> knots, double tau,
                               TrajectoryRecord record)
    : knots_(std::move(knots)), tau_(tau), record_(std::move(record)) {
  energy_ = 0.0;
  for (size_t k = 0; k + 1 < knots_.size(); ++k) {
    energy_ += (knots_[k + 1] - knots_[k]).squaredNorm() / (2.0 * tau_);
  }
}

Vector ProxTrajectory::affine_state(double t) const {
  if (t <= 0.0) return knots_.front();
  const size_t nseg = knots_.size() - 1;
  const double u = t / tau_;
  const size_t k = std::min(static_cast<size_t>(std::floor(u)), nseg - 1);
  const double theta = std::min(u - static_cast<double>(k), 1.0);
  return knots_[k] + theta * (knots_[k + 1] - knots_[k]);
}

Vector ProxTrajectory::piecewise_state(double t) const {
  if (t <= 0.0) return knots_.front();
  const size_t nseg = knots_.size() - 1;
  // Right-continuous: value x_{k+1} on (k tau, (k+1) tau].
  const double u = t / tau_;
  size_t k = static_cast<size_t>(std::ceil(u));
  k = std::min(std::max<size_t>(k, 1), nseg);
  return knots_[k];
}

ProxTrajectory minimizing_movement(const LossModel& model, const Vector& x0,
                                   const ProxSchedule& schedule,
                                   const GuardSettings& guards) {
  if (schedule.outer_steps < 1) {
    throw ConfigError("minimizing_movement: outer_steps must be >= 1");
  }
  double tau = schedule.tau;
  const Vector g0 = model.subgradient(x0).vector;
  if (tau <= 0.0) {
    tau = 0.1 * (1.0 + x0.norm()) / (1.0 + g0.norm());
  }

  TrajectoryRecord rec;
  rec.method = Method::kProx;
  rec.terminated_by = TerminationReason::kHorizon;
  std::vector<Vector> knots;
  knots.reserve(schedule.outer_steps + 1);
  knots.push_back(x0);
  rec.append(0.0, x0, model.value(x0), 0.0, g0.norm());

  Vector x = x0;
  for (int k = 0; k < schedule.outer_steps; ++k) {
    Vector xn = prox_step(model, x, tau, schedule.inner_tol,
                          schedule.inner_max_iters);
    const double stepn = (xn - x).norm();
    const double vel = stepn / tau;  // |v_{k+1}|, a subgradient norm at x_{k+1}
    x = std::move(xn);
    knots.push_back(x);
    rec.append(tau * (k + 1), x, model.value(x), stepn, vel);
    if (x.norm() >= guards.divergence_guard) {
      rec.terminated_by = TerminationReason::kDivergenceGuard;
      break;
    }
    if (vel <= guards.critical_tol) {
      rec.terminated_by = TerminationReason::kCriticalTol;
      break;
    }
  }
  return ProxTrajectory(std::move(knots), tau, std::move(rec));
}

HolderReport holder_estimate(const ProxTrajectory& traj, double energy_bound_c,
                             uint64_t seed, int random_pairs) {
  HolderReport rep;
  rep.bound = std::sqrt(2.0 * std::max(energy_bound_c, 0.0));
  const auto& knots = traj.knots();
  const double tau = traj.tau();
  auto consider = [&](double s, double t, const Vector& xs, const Vector& xt) {
    const double dt = std::abs(t - s);
    if (dt == 0.0) return;
    const double ratio = (xt - xs).norm() / std::sqrt(dt);
    if (ratio > rep.max_ratio) {
      rep.max_ratio = ratio;
      rep.arg_s = s;
      rep.arg_t = t;
    }
  };
  for (size_t i = 0; i < knots.size(); ++i) {
    for (size_t j = i + 1; j < knots.size(); ++j) {
      consider(tau * i, tau * j, knots[i], knots[j]);
    }
  }
  CounterRng rng(mix64(seed ^ 0x401DE12ULL));
  const double horizon = traj.horizon();
  for (int k = 0; k < random_pairs; ++k) {
    const double s = rng.uniform(0.0, horizon);
    const double t = rng.uniform(0.0, horizon);
    consider(s, t, traj.affine_state(s), traj.affine_state(t));
  }
  rep.violated = rep.max_ratio > rep.bound * (1.0 + 1e-9);
  return rep;
}

}  // namespace flowscape
