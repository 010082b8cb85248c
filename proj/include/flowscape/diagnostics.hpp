#pragma once

#include <json.hpp>

#include <optional>
#include <string>

#include "flowscape/flows.hpp"
#include "flowscape/model.hpp"

namespace flowscape {

enum class Verdict { kPass, kFail, kInconclusive };
const char* to_string(Verdict v);

// State/time at which a check attains its extreme value.
struct Witness {
  double time = 0.0;
  Vector state;
};

struct DiagnosticReport {
  std::string check_name;
  Verdict verdict = Verdict::kInconclusive;
  std::optional<Witness> witness;
  double max_drift = 0.0;
  double tolerance_used = 0.0;

  nlohmann::ordered_json to_json() const;
};

// Conservation of X^T X - Y^T Y along smooth factor flows. Fixed-step
// records are reported inconclusive: the conservation law is a property of
// the flow, not of its forward-Euler discretization.
DiagnosticReport check_balancedness_sensing(const LossModel& model,
                                            const TrajectoryRecord& record,
                                            double tol = 1e-5);

// Same quantity along a minimizing-movement run; the first-order scheme only
// approximates the inclusion, so the default tolerance scales with tau.
DiagnosticReport check_balancedness_l1(const LossModel& model,
                                       const TrajectoryRecord& record,
                                       double tau, double tol = 0.0);

// |X|_2^4 + |Y|_2^4 <= |X0^T X0 - Y0^T Y0|_F^2 + 2mn (|X0 Y0^T - M|_1 + |M|_1)^2
// at every sample.
DiagnosticReport check_l1_norm_bound(const LossModel& model,
                                     const TrajectoryRecord& record);

// With X = U S V^T and rank r < d0, the trailing d0 - r columns of
// W1(t) U stay constant along the flow. Vacuous pass when X has full row
// rank (the frozen block is empty).
DiagnosticReport check_frozen_block(const LossModel& model,
                                    const TrajectoryRecord& record,
                                    double tol = 1e-6);

struct SignStabilityOptions {
  double state_deadband_rel = 1e-12;     // times max |w_i| over the run
  double velocity_deadband_rel = 1e-7;   // times max |v| over the run
  double slope_tol = 1e-8;               // monotonicity slack per unit time
};

struct SignStabilityReport {
  DiagnosticReport report;
  // Last observed sign change plus one sample.
  double stabilization_time = 0.0;
  // +1: w_{L-1} - w_L^2/2 should increase after stabilization, -1: decrease.
  int monotone_direction = -1;
  // Worst wrong-direction increment rate observed after stabilization.
  double monotone_violation = 0.0;
};

// Sign stability of weights and velocities for sigmoid-chain records, plus
// monotonicity of w_{L-1} - w_L^2/2 after the detected stabilization time.
// Throws StructureError for non-chain models.
SignStabilityReport check_sign_stability(const LossModel& model,
                                         const TrajectoryRecord& record,
                                         const SignStabilityOptions& opts = {});

enum class BoundednessClass { kBounded, kDiverging, kInconclusive };
const char* to_string(BoundednessClass c);

struct ClassifySettings {
  double divergence_guard = 1e6;
  // Least-squares slope of log|x| per unit time above which the tail is
  // treated as diverging. The zoo's slow escapes sit around 3e-3..6e-3 at
  // the horizons used here while converged runs plateau below 1e-6.
  double diverge_slope = 1e-3;
  double plateau_slope = 1e-4;
  // Tail median gradient must drop below this times (1 + head median).
  double grad_plateau_rel = 1e-2;
};

struct BoundednessVerdict {
  BoundednessClass cls = BoundednessClass::kInconclusive;
  double sup_norm = 0.0;
  double tail_slope = 0.0;

  nlohmann::ordered_json to_json() const;
};

BoundednessVerdict classify_boundedness(const TrajectoryRecord& record,
                                        const ClassifySettings& settings = {});

struct EpsilonCriticalResult {
  Vector x;
  Vector subgradient;
  double value = 0.0;
  double grad_norm = 0.0;
  double time = 0.0;
};

// Runs minimizing movement until a state with value <= inf f + eps and a
// subgradient selection of norm <= eps appears. Throws HorizonError with the
// best pair achieved if the step budget runs out first, and ConfigError if
// no infimum (or explicit lower bound) is available.
EpsilonCriticalResult epsilon_critical_search(
    const LossModel& model, const Vector& x0, double eps,
    std::optional<double> lower_bound = std::nullopt,
    ProxSchedule schedule = {0.0, 1e-10, 400, 200000});

}  // namespace flowscape
