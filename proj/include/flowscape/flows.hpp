#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flowscape/model.hpp"

namespace flowscape {

enum class Method { kEuler, kFlow, kProx };
enum class TerminationReason { kHorizon, kCriticalTol, kDivergenceGuard };

const char* to_string(Method m);
const char* to_string(TerminationReason r);

struct GuardSettings {
  // Stop when the selected subgradient norm falls below this.
  double critical_tol = 1e-8;
  // Stop (and flag) when the state norm reaches this.
  double divergence_guard = 1e6;
};

// Time-stamped state history of one descent run. All sequences have equal
// length; step_norms[0] is 0 and step_norms[k] = |x_k - x_{k-1}| for k >= 1.
// For Euler records, times are iteration counts.
struct TrajectoryRecord {
  Method method = Method::kEuler;
  std::vector<double> times;
  std::vector<Vector> states;
  std::vector<double> values;
  std::vector<double> step_norms;
  std::vector<double> grad_norms;
  TerminationReason terminated_by = TerminationReason::kHorizon;

  size_t size() const { return times.size(); }
  void append(double t, Vector state, double value, double step_norm,
              double grad_norm);
};

// Fixed-step subgradient descent x_{k+1} = x_k - step * g_k. States are
// recorded every `record_stride` iterations plus the final iterate.
TrajectoryRecord euler_descent(const LossModel& model, const Vector& x0,
                               double step, int max_iters,
                               const GuardSettings& guards = {},
                               int record_stride = 1);

struct FlowOptions {
  double rel_tol = 1e-9;
  double abs_tol = 1e-12;
  GuardSettings guards;
  long max_steps = 2000000;
};

// Adaptive embedded Runge-Kutta (Dormand-Prince 5(4)) integration of
// x' = -grad f(x). Records every accepted step node. Piecewise-smooth models
// are rejected; route those through minimizing_movement instead.
TrajectoryRecord gradient_flow(const LossModel& model, const Vector& x0,
                               double t_end, const FlowOptions& opts = {});

// Same integration, but the record holds dense output (cubic Hermite within
// accepted steps) at the strictly increasing `sample_times`.
TrajectoryRecord gradient_flow_sampled(const LossModel& model,
                                       const Vector& x0, double t_end,
                                       std::span<const double> sample_times,
                                       const FlowOptions& opts = {});

// One step of the minimizing-movement recursion: an approximate minimizer of
// z -> f(z) + |z - x_k|^2 / (2 tau) satisfying the descent certificate
// f(z) + |z - x_k|^2/(2 tau) <= f(x_k). Uses the model's specialized prox
// when available, otherwise inner descent with backtracking.
Vector prox_step(const LossModel& model, const Vector& x_k, double tau,
                 double inner_tol = 1e-10, int inner_max_iters = 400);

struct ProxSchedule {
  double tau = 0.0;  // 0 picks 0.1 (1 + |x0|) / (1 + |g(x0)|)
  double inner_tol = 1e-10;
  int inner_max_iters = 400;
  int outer_steps = 1000;
};

// Piecewise-constant and piecewise-affine interpolants of a prox run.
class ProxTrajectory {
 public:
  ProxTrajectory(std::vector<Vector> knots, double tau,
                 TrajectoryRecord record);

  double tau() const { return tau_; }
  double horizon() const { return tau_ * (static_cast<double>(num_steps())); }
  size_t num_steps() const { return knots_.size() - 1; }
  const std::vector<Vector>& knots() const { return knots_; }
  const TrajectoryRecord& record() const { return record_; }

  // sum_k |x_{k+1} - x_k|^2 / (2 tau).
  double energy() const { return energy_; }

  // Piecewise-affine interpolant through the knots.
  Vector affine_state(double t) const;
  // Piecewise-constant curve, right-continuous at the knots.
  Vector piecewise_state(double t) const;

 private:
  std::vector<Vector> knots_;
  double tau_;
  double energy_;
  TrajectoryRecord record_;
};

ProxTrajectory minimizing_movement(const LossModel& model, const Vector& x0,
                                   const ProxSchedule& schedule,
                                   const GuardSettings& guards = {});

struct HolderReport {
  double max_ratio = 0.0;   // sup |x~(t) - x~(s)| / sqrt(|t-s|) over the scan
  double bound = 0.0;       // sqrt(2 C)
  bool violated = false;    // max_ratio > bound * (1 + 1e-9)
  double arg_s = 0.0, arg_t = 0.0;
};

// Scans all knot pairs plus `random_pairs` seeded random (s,t) pairs.
HolderReport holder_estimate(const ProxTrajectory& traj, double energy_bound_c,
                             uint64_t seed = 0, int random_pairs = 1000);

}  // namespace flowscape
