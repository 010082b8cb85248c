#include "flowscape/diagnostics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "flowscape/models.hpp"

namespace flowscape {

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::kPass: return "pass";
    case Verdict::kFail: return "fail";
    case Verdict::kInconclusive: return "inconclusive";
  }
  return "?";
}

const char* to_string(BoundednessClass c) {
  switch (c) {
    case BoundednessClass::kBounded: return "bounded";
    case BoundednessClass::kDiverging: return "diverging";
    case BoundednessClass::kInconclusive: return "inconclusive";
  }
  return "?";
}

nlohmann::ordered_json DiagnosticReport::to_json() const {
  nlohmann::ordered_json j;
  j["check_name"] = check_name;
  j["verdict"] = to_string(verdict);
  if (witness) {
    j["witness"] = {{"time", witness->time},
                    {"state", std::vector<double>(
                                  witness->state.data(),
                                  witness->state.data() + witness->state.size())}};
  } else {
    j["witness"] = nullptr;
  }
  j["max_drift"] = max_drift;
  j["tolerance_used"] = tolerance_used;
  return j;
}

nlohmann::ordered_json BoundednessVerdict::to_json() const {
  nlohmann::ordered_json j;
  j["class"] = to_string(cls);
  j["sup_norm"] = sup_norm;
  j["tail_slope"] = tail_slope;
  return j;
}

namespace {

const FactorPairModel& as_factor_pair(const LossModel& model,
                                      const char* check) {
  const auto* fp = dynamic_cast<const FactorPairModel*>(&model);
  if (!fp) {
    throw StructureError(std::string(check) + ": model '" + model.name() +
                         "' has no (X, Y) factor structure");
  }
  return *fp;
}

void require_record(const TrajectoryRecord& record, const char* check) {
  if (record.size() == 0) {
    throw StructureError(std::string(check) + ": empty record");
  }
}

// Max over samples of |X^T X - Y^T Y - C0|_F with C0 taken from t = 0.
std::pair<double, size_t> balancedness_drift(const FactorPairModel& fp,
                                             const TrajectoryRecord& record) {
  const Matrix x0 = fp.x_factor(record.states[0]);
  const Matrix y0 = fp.y_factor(record.states[0]);
  const Matrix c0 = x0.transpose() * x0 - y0.transpose() * y0;
  double drift = 0.0;
  size_t arg = 0;
  for (size_t k = 0; k < record.size(); ++k) {
    const Matrix x = fp.x_factor(record.states[k]);
    const Matrix y = fp.y_factor(record.states[k]);
    const double d = (x.transpose() * x - y.transpose() * y - c0).norm();
    if (d > drift) {
      drift = d;
      arg = k;
    }
  }
  return {drift, arg};
}

}  // namespace

DiagnosticReport check_balancedness_sensing(const LossModel& model,
                                            const TrajectoryRecord& record,
                                            double tol) {
  const auto& fp = as_factor_pair(model, "check_balancedness_sensing");
  require_record(record, "check_balancedness_sensing");
  auto [drift, arg] = balancedness_drift(fp, record);

  DiagnosticReport rep;
  rep.check_name = "balancedness-sensing";
  rep.max_drift = drift;
  rep.tolerance_used = tol;
  if (record.method != Method::kFlow) {
    rep.verdict = Verdict::kInconclusive;
    return rep;
  }
  rep.verdict = drift <= tol ? Verdict::kPass : Verdict::kFail;
  if (rep.verdict == Verdict::kFail) {
    rep.witness = Witness{record.times[arg], record.states[arg]};
  }
  return rep;
}

DiagnosticReport check_balancedness_l1(const LossModel& model,
                                       const TrajectoryRecord& record,
                                       double tau, double tol) {
  const auto& fp = as_factor_pair(model, "check_balancedness_l1");
  require_record(record, "check_balancedness_l1");
  if (tol <= 0.0) tol = 5.0 * tau;
  auto [drift, arg] = balancedness_drift(fp, record);

  DiagnosticReport rep;
  rep.check_name = "balancedness-l1";
  rep.max_drift = drift;
  rep.tolerance_used = tol;
  if (record.method != Method::kProx) {
    rep.verdict = Verdict::kInconclusive;
    return rep;
  }
  rep.verdict = drift <= tol ? Verdict::kPass : Verdict::kFail;
  if (rep.verdict == Verdict::kFail) {
    rep.witness = Witness{record.times[arg], record.states[arg]};
  }
  return rep;
}

DiagnosticReport check_l1_norm_bound(const LossModel& model,
                                     const TrajectoryRecord& record) {
  const auto* l1 = dynamic_cast<const L1Factorization*>(&model);
  if (!l1) {
    throw StructureError("check_l1_norm_bound: needs an l1-factorization model");
  }
  require_record(record, "check_l1_norm_bound");

  const Matrix x0 = l1->x_factor(record.states[0]);
  const Matrix y0 = l1->y_factor(record.states[0]);
  const double mn =
      static_cast<double>(l1->rows_x()) * static_cast<double>(l1->rows_y());
  const double m1 = l1->data().cwiseAbs().sum();
  const double r0 = (x0 * y0.transpose() - l1->data()).cwiseAbs().sum();
  const double rhs = (x0.transpose() * x0 - y0.transpose() * y0).squaredNorm() +
                     2.0 * mn * (r0 + m1) * (r0 + m1);

  auto spec_norm = [](const Matrix& m) {
    return Eigen::JacobiSVD<Matrix>(m).singularValues()[0];
  };
  double worst = -std::numeric_limits<double>::infinity();
  size_t arg = 0;
  for (size_t k = 0; k < record.size(); ++k) {
    const double sx = spec_norm(l1->x_factor(record.states[k]));
    const double sy = spec_norm(l1->y_factor(record.states[k]));
    const double lhs = sx * sx * sx * sx + sy * sy * sy * sy;
    if (lhs - rhs > worst) {
      worst = lhs - rhs;
      arg = k;
    }
  }

  DiagnosticReport rep;
  rep.check_name = "l1-norm-bound";
  rep.max_drift = worst;  // signed margin: <= 0 means the bound held
  rep.tolerance_used = 1e-9 * (1.0 + rhs);
  rep.verdict = worst <= rep.tolerance_used ? Verdict::kPass : Verdict::kFail;
  if (rep.verdict == Verdict::kFail) {
    rep.witness = Witness{record.times[arg], record.states[arg]};
  }
  return rep;
}

DiagnosticReport check_frozen_block(const LossModel& model,
                                    const TrajectoryRecord& record,
                                    double tol) {
  const auto* nn = dynamic_cast<const LinearNet*>(&model);
  if (!nn) {
    throw StructureError("check_frozen_block: needs a linear-nn model");
  }
  require_record(record, "check_frozen_block");
  const Matrix& x_data = nn->x_data();
  if (!x_data.allFinite()) {
    throw NumericError("check_frozen_block: non-finite input data");
  }

  Eigen::JacobiSVD<Matrix> svd(x_data, Eigen::ComputeFullU);
  const auto& sv = svd.singularValues();
  const double cutoff = sv.size() == 0
                            ? 0.0
                            : sv[0] * std::max(x_data.rows(), x_data.cols()) *
                                  std::numeric_limits<double>::epsilon();
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv[i] > cutoff) ++rank;
  }
  const int d0 = static_cast<int>(x_data.rows());

  DiagnosticReport rep;
  rep.check_name = "frozen-block";
  rep.tolerance_used = tol;
  if (rank == d0) {
    rep.verdict = Verdict::kPass;  // vacuous: the frozen block is empty
    rep.max_drift = 0.0;
    return rep;
  }

  const Matrix u_tail = svd.matrixU().rightCols(d0 - rank);
  const Matrix frozen0 = nn->weights(record.states[0])[0] * u_tail;
  double drift = 0.0;
  size_t arg = 0;
  for (size_t k = 0; k < record.size(); ++k) {
    const double d =
        (nn->weights(record.states[k])[0] * u_tail - frozen0).norm();
    if (d > drift) {
      drift = d;
      arg = k;
    }
  }
  rep.max_drift = drift;
  if (record.method != Method::kFlow) {
    rep.verdict = Verdict::kInconclusive;
    return rep;
  }
  rep.verdict = drift <= tol ? Verdict::kPass : Verdict::kFail;
  if (rep.verdict == Verdict::kFail) {
    rep.witness = Witness{record.times[arg], record.states[arg]};
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Sign stability

namespace {

// Last time a thresholded sign flip occurs in `series`; values within
// `deadband` of zero carry no sign.
double last_sign_change(const std::vector<double>& times,
                        const std::vector<double>& series, double deadband) {
  double last = 0.0;
  int prev = 0;
  for (size_t k = 0; k < series.size(); ++k) {
    const double v = series[k];
    const int s = std::abs(v) <= deadband ? 0 : (v > 0.0 ? 1 : -1);
    if (s != 0) {
      if (prev != 0 && s != prev) last = times[k];
      prev = s;
    }
  }
  return last;
}

}  // namespace

SignStabilityReport check_sign_stability(const LossModel& model,
                                         const TrajectoryRecord& record,
                                         const SignStabilityOptions& opts) {
  const auto* chain = dynamic_cast<const SigmoidChain*>(&model);
  if (!chain) {
    throw StructureError("check_sign_stability: model '" + model.name() +
                         "' is not a sigmoid chain");
  }
  require_record(record, "check_sign_stability");
  const int L = chain->layers();
  const size_t n = record.size();

  SignStabilityReport out;
  out.report.check_name = "sign-stability";
  out.report.tolerance_used = opts.slope_tol;
  if (n < 3) {
    out.report.verdict = Verdict::kInconclusive;
    return out;
  }

  // Finite-difference velocities at interval midpoints.
  std::vector<double> vtimes(n - 1);
  std::vector<std::vector<double>> vel(L, std::vector<double>(n - 1));
  double vmax = 0.0;
  for (size_t k = 0; k + 1 < n; ++k) {
    const double dt = record.times[k + 1] - record.times[k];
    vtimes[k] = 0.5 * (record.times[k] + record.times[k + 1]);
    for (int i = 0; i < L; ++i) {
      const double v = (record.states[k + 1][i] - record.states[k][i]) / dt;
      vel[i][k] = v;
      vmax = std::max(vmax, std::abs(v));
    }
  }

  const double t_end = record.times.back();
  double last_change = 0.0;
  for (int i = 0; i < L; ++i) {
    std::vector<double> wi(n);
    double wmax = 0.0;
    for (size_t k = 0; k < n; ++k) {
      wi[k] = record.states[k][i];
      wmax = std::max(wmax, std::abs(wi[k]));
    }
    last_change = std::max(
        last_change,
        last_sign_change(record.times, wi, opts.state_deadband_rel * wmax));
    last_change = std::max(
        last_change,
        last_sign_change(vtimes, vel[i], opts.velocity_deadband_rel * vmax));
  }

  // Stabilization time: last observed change plus one sample.
  size_t stab_idx = 0;
  while (stab_idx < n && record.times[stab_idx] <= last_change) ++stab_idx;
  stab_idx = std::min(stab_idx + 1, n - 1);
  out.stabilization_time = record.times[stab_idx];

  if (last_change > 0.9 * t_end) {
    out.report.verdict = Verdict::kInconclusive;  // horizon too short
    out.report.max_drift = last_change;
    return out;
  }

  // Direction of w_{L-1} - w_L^2/2 after stabilization is set by the sign
  // of dw_L/dt * w_L there: nonnegative means decreasing.
  const double vdead = opts.velocity_deadband_rel * vmax;
  double dir_acc = 0.0;
  for (size_t k = 0; k + 1 < n; ++k) {
    if (vtimes[k] < out.stabilization_time) continue;
    const double v = vel[L - 1][k];
    if (std::abs(v) <= vdead) continue;
    const double wl = 0.5 * (record.states[k][L - 1] + record.states[k + 1][L - 1]);
    dir_acc += (v * wl > 0.0) ? 1.0 : -1.0;
  }
  out.monotone_direction = dir_acc >= 0.0 ? -1 : +1;  // -1: m decreases

  double violation = 0.0;
  size_t witness_idx = 0;
  auto m_of = [&](size_t k) {
    const double wlm1 = record.states[k][L - 2];
    const double wl = record.states[k][L - 1];
    return wlm1 - 0.5 * wl * wl;
  };
  for (size_t k = 0; k + 1 < n; ++k) {
    if (record.times[k] < out.stabilization_time) continue;
    const double dt = record.times[k + 1] - record.times[k];
    const double rate = (m_of(k + 1) - m_of(k)) / dt;
    const double wrong = out.monotone_direction < 0 ? rate : -rate;
    if (wrong > violation) {
      violation = wrong;
      witness_idx = k + 1;
    }
  }
  out.monotone_violation = violation;
  out.report.max_drift = violation;
  out.report.verdict =
      violation <= opts.slope_tol ? Verdict::kPass : Verdict::kFail;
  if (out.report.verdict == Verdict::kFail) {
    out.report.witness =
        Witness{record.times[witness_idx], record.states[witness_idx]};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Boundedness classification

BoundednessVerdict classify_boundedness(const TrajectoryRecord& record,
                                        const ClassifySettings& settings) {
  if (record.size() == 0) {
    throw StructureError("classify_boundedness: empty record");
  }
  BoundednessVerdict v;
  const size_t n = record.size();
  for (size_t k = 0; k < n; ++k) {
    v.sup_norm = std::max(v.sup_norm, record.states[k].norm());
  }

  // Least-squares slope of log |x| over the last quartile of samples.
  const size_t start = n >= 4 ? (3 * n) / 4 : 0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  size_t cnt = 0;
  for (size_t k = start; k < n; ++k) {
    const double t = record.times[k];
    const double y = std::log(std::max(record.states[k].norm(), 1e-300));
    sx += t;
    sy += y;
    sxx += t * t;
    sxy += t * y;
    ++cnt;
  }
  const double denom = cnt * sxx - sx * sx;
  v.tail_slope = (cnt >= 2 && denom > 0.0) ? (cnt * sxy - sx * sy) / denom : 0.0;

  if (record.terminated_by == TerminationReason::kDivergenceGuard ||
      v.sup_norm >= settings.divergence_guard ||
      v.tail_slope > settings.diverge_slope) {
    v.cls = BoundednessClass::kDiverging;
    return v;
  }
  if (record.terminated_by == TerminationReason::kCriticalTol) {
    v.cls = BoundednessClass::kBounded;
    return v;
  }
  auto median_range = [&](size_t lo, size_t hi) {
    std::vector<double> g(record.grad_norms.begin() + lo,
                          record.grad_norms.begin() + hi);
    std::sort(g.begin(), g.end());
    return g.empty() ? 0.0 : g[g.size() / 2];
  };
  const double head = median_range(0, std::max<size_t>(n / 4, 1));
  const double tail = median_range(start, n);
  if (v.tail_slope <= settings.plateau_slope &&
      tail <= settings.grad_plateau_rel * (1.0 + head)) {
    v.cls = BoundednessClass::kBounded;
    return v;
  }
  v.cls = BoundednessClass::kInconclusive;
  return v;
}

// ---------------------------------------------------------------------------
// Epsilon-critical search

EpsilonCriticalResult epsilon_critical_search(const LossModel& model,
                                              const Vector& x0, double eps,
                                              std::optional<double> lower_bound,
                                              ProxSchedule schedule) {
  if (eps <= 0.0) throw ConfigError("epsilon_critical_search: eps must be > 0");
  std::optional<double> inf = lower_bound;
  if (!inf) inf = model.known_infimum();
  if (!inf) {
    throw ConfigError(
        "epsilon_critical_search: model has no known infimum and no lower "
        "bound was supplied");
  }

  double tau = schedule.tau;
  if (tau <= 0.0) {
    tau = 0.1 * (1.0 + x0.norm()) /
          (1.0 + model.subgradient(x0).vector.norm());
  }

  Vector x = x0;
  double best_val = model.value(x0);
  double best_gn = model.subgradient(x0).vector.norm();
  Vector best_x = x0;
  for (int k = 0; k <= schedule.outer_steps; ++k) {
    SubgradientSelection sel = model.subgradient(x);
    const double val = model.value(x);
    const double gn = sel.vector.norm();
    if (val <= *inf + eps && gn <= eps) {
      return EpsilonCriticalResult{x, sel.vector, val, gn, tau * k};
    }
    if (gn < best_gn) {
      best_gn = gn;
      best_val = val;
      best_x = x;
    }
    if (k == schedule.outer_steps) break;
    x = prox_step(model, x, tau, schedule.inner_tol, schedule.inner_max_iters);
  }
  throw HorizonError("epsilon_critical_search: horizon exhausted", best_x,
                     best_val, best_gn);
}

}  // namespace flowscape
