#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "flowscape/diagnostics.hpp"
#include "flowscape/flows.hpp"
#include "flowscape/model.hpp"

namespace flowscape {

// Terminal plateau inside a value band with small gradient. The defaults
// match the completion experiment: escaping trials flatten out just above
// value 1 (the level of the residual they can no longer fit) while
// successful trials reach ~0.
struct StuckRule {
  double center = 1.0;
  double half_width = 0.2;
  int min_plateau_iters = 500;
  double grad_tol = 1e-2;
};

struct InitSpec {
  enum class Kind { kUniform, kPoints };
  Kind kind = Kind::kUniform;
  Vector lo, hi;                // uniform box, per-axis
  std::vector<Vector> points;   // explicit initial points, cycled over trials
};

struct EulerParams {
  double step = 0.01;
  int max_iters = 50000;
};

struct FlowParams {
  double t_end = 10.0;
  double rel_tol = 1e-9;
  double abs_tol = 1e-12;
};

struct ProxParams {
  double tau = 0.1;
  int outer_steps = 1000;
  double inner_tol = 1e-10;
  int inner_max_iters = 400;
};

struct ExperimentConfig {
  std::string model;
  nlohmann::json model_params = nlohmann::json::object();
  Method method = Method::kEuler;
  EulerParams euler;
  FlowParams flow;
  ProxParams prox;
  int trials = 1;
  uint64_t seed = 0;
  InitSpec init;
  int record_stride = 100;
  StuckRule stuck;
  GuardSettings guards;
  std::string manifest_name = "manifest.json";
  bool trial_csv = false;

  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::ordered_json to_json() const;
};

// Key-table config files ([section] headers, key = value, #-comments,
// numbers/bools/strings/arrays). Produces the equivalent JSON object.
nlohmann::json parse_toml_lite(const std::string& text);

// Loads .toml (key-table) or .json configs by extension.
ExperimentConfig load_config(const std::string& path);

struct TrialResult {
  double terminal_value = 0.0;
  double terminal_grad_norm = 0.0;
  BoundednessClass boundedness = BoundednessClass::kInconclusive;
  bool stuck = false;
};

struct RunManifest {
  std::string toolkit_version;
  nlohmann::ordered_json config_echo;
  std::vector<TrialResult> trials;
  int stuck_count = 0;
  double stuck_fraction = 0.0;

  nlohmann::ordered_json to_json() const;
  std::string to_string() const;  // the exact manifest file bytes
};

bool is_stuck(const TrajectoryRecord& record, const StuckRule& rule);

// Runs all trials (trial i draws from substream_key(seed, i)) and reduces in
// trial order; parallel and sequential execution produce identical
// manifests. When out_dir is nonempty and config.trial_csv is set, writes
// one value-curve CSV per trial.
RunManifest run_experiment(const ExperimentConfig& config, unsigned threads = 0,
                           const std::string& out_dir = "");

// fig1: value-vs-iteration CSVs for the completion experiment;
// fig2/fig3: grid CSVs of the ReLU toy and the asymmetric two-point sigmoid
// landscape; fig4: 1-D samples of the infinite-critical-value example.
// Returns the list of files written.
std::vector<std::string> reproduce_figure(const std::string& figure_id,
                                          const std::string& out_dir,
                                          uint64_t seed = 42);

// Entry point behind the command-line tool; exit code 0 on success, 1 on
// configuration errors, 2 on numeric failures.
int cli_main(int argc, char** argv);

}  // namespace flowscape
