#include <cmath>
#include <filesystem>
#include <sstream>

#include "flowscape/harness.hpp"
#include "flowscape/io.hpp"
#include "flowscape/landscape.hpp"
#include "flowscape/parallel.hpp"
#include "flowscape/registry.hpp"
#include "flowscape/rng.hpp"

namespace flowscape {

bool is_stuck(const TrajectoryRecord& record, const StuckRule& rule) {
  if (record.size() == 0) return false;
  const double t_end = record.times.back();
  const double window_start = t_end - rule.min_plateau_iters;
  const double lo = rule.center - rule.half_width;
  const double hi = rule.center + rule.half_width;
  bool any = false;
  for (size_t k = 0; k < record.size(); ++k) {
    if (record.times[k] < window_start) continue;
    if (record.values[k] < lo || record.values[k] > hi) return false;
    if (record.grad_norms[k] > rule.grad_tol) return false;
    any = true;
  }
  return any && window_start >= 0.0;
}

nlohmann::ordered_json RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["toolkit_version"] = toolkit_version;
  j["config"] = config_echo;
  nlohmann::ordered_json trials_json = nlohmann::ordered_json::array();
  for (const TrialResult& t : trials) {
    nlohmann::ordered_json tj;
    tj["terminal_value"] = t.terminal_value;
    tj["terminal_grad_norm"] = t.terminal_grad_norm;
    tj["boundedness"] = flowscape::to_string(t.boundedness);
    tj["stuck"] = t.stuck;
    trials_json.push_back(std::move(tj));
  }
  j["trials"] = std::move(trials_json);
  j["stuck_count"] = stuck_count;
  j["stuck_fraction"] = stuck_fraction;
  return j;
}

std::string RunManifest::to_string() const { return to_json().dump(2) + "\n"; }

namespace {

Vector draw_init(const ExperimentConfig& config, const LossModel& model,
                 uint64_t trial) {
  const int d = model.dim();
  if (config.init.kind == InitSpec::Kind::kPoints) {
    const auto& pts = config.init.points;
    if (pts.empty()) throw ConfigError("init: no points given");
    const Vector& p = pts[trial % pts.size()];
    if (p.size() != d) throw ConfigError("init: point dimension mismatch");
    return p;
  }
  Vector lo = config.init.lo, hi = config.init.hi;
  if (lo.size() == 0) lo = Vector::Constant(d, -1.0);
  if (hi.size() == 0) hi = Vector::Constant(d, 1.0);
  if (lo.size() == 1 && d > 1) lo = Vector::Constant(d, lo[0]);
  if (hi.size() == 1 && d > 1) hi = Vector::Constant(d, hi[0]);
  if (lo.size() != d || hi.size() != d) {
    throw ConfigError("init: box bounds dimension mismatch");
  }
  CounterRng rng(substream_key(config.seed, trial));
  Vector x(d);
  for (int i = 0; i < d; ++i) x[i] = rng.uniform(lo[i], hi[i]);
  return x;
}

TrajectoryRecord run_one(const ExperimentConfig& config, const LossModel& model,
                         const Vector& x0) {
  switch (config.method) {
    case Method::kEuler:
      return euler_descent(model, x0, config.euler.step, config.euler.max_iters,
                           config.guards, config.record_stride);
    case Method::kFlow: {
      FlowOptions opts;
      opts.rel_tol = config.flow.rel_tol;
      opts.abs_tol = config.flow.abs_tol;
      opts.guards = config.guards;
      return gradient_flow(model, x0, config.flow.t_end, opts);
    }
    case Method::kProx: {
      ProxSchedule sched{config.prox.tau, config.prox.inner_tol,
                         config.prox.inner_max_iters, config.prox.outer_steps};
      return minimizing_movement(model, x0, sched, config.guards).record();
    }
  }
  throw ConfigError("unknown method");
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& config, unsigned threads,
                           const std::string& out_dir) {
  ModelPtr model = make_model(config.model, config.model_params);

  RunManifest manifest;
  manifest.toolkit_version = kToolkitVersion;
  manifest.config_echo = config.to_json();
  manifest.trials.resize(config.trials);

  const bool write_csvs = config.trial_csv && !out_dir.empty();
  std::vector<std::string> csv_bodies(write_csvs ? config.trials : 0);

  parallel_for(
      static_cast<size_t>(config.trials),
      [&](size_t trial) {
        const Vector x0 = draw_init(config, *model, trial);
        const TrajectoryRecord rec = run_one(config, *model, x0);
        TrialResult r;
        r.terminal_value = rec.values.back();
        r.terminal_grad_norm = rec.grad_norms.back();
        r.boundedness =
            classify_boundedness(
                rec, ClassifySettings{config.guards.divergence_guard, 1e-3,
                                      1e-4, 1e-2})
                .cls;
        r.stuck = is_stuck(rec, config.stuck);
        manifest.trials[trial] = r;
        if (write_csvs) {
          std::ostringstream os;
          write_value_curve_csv(
              rec, os, config.method == Method::kEuler ? "iteration" : "t");
          csv_bodies[trial] = os.str();
        }
      },
      threads);

  for (const TrialResult& t : manifest.trials) {
    if (t.stuck) ++manifest.stuck_count;
  }
  manifest.stuck_fraction =
      static_cast<double>(manifest.stuck_count) / config.trials;

  if (write_csvs) {
    for (int i = 0; i < config.trials; ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "trial_%04d.csv", i);
      write_text_file((std::filesystem::path(out_dir) / name).string(),
                      csv_bodies[i]);
    }
  }
  if (!out_dir.empty()) {
    write_text_file(
        (std::filesystem::path(out_dir) / config.manifest_name).string(),
        manifest.to_string());
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// Figure reproduction

namespace {

std::string grid_csv_string(const GridField& field) {
  std::ostringstream os;
  write_grid_csv(field, os);
  return os.str();
}

}  // namespace

std::vector<std::string> reproduce_figure(const std::string& figure_id,
                                          const std::string& out_dir,
                                          uint64_t seed) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  auto emit = [&](const std::string& name, const std::string& body) {
    const std::string path = (fs::path(out_dir) / name).string();
    write_text_file(path, body);
    files.push_back(path);
  };

  if (figure_id == "fig1") {
    ExperimentConfig config;
    config.model = "matrix-completion-ex1";
    config.method = Method::kEuler;
    config.euler = {0.01, 50000};
    config.trials = 10;
    config.seed = seed;
    config.init.kind = InitSpec::Kind::kUniform;
    config.init.lo = Vector::Constant(4, -1.0);
    config.init.hi = Vector::Constant(4, 1.0);
    config.record_stride = 100;
    config.trial_csv = true;
    RunManifest manifest = run_experiment(config, 0, out_dir);
    files.push_back((fs::path(out_dir) / config.manifest_name).string());
    for (int i = 0; i < config.trials; ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "trial_%04d.csv", i);
      files.push_back((fs::path(out_dir) / name).string());
    }
    return files;
  }
  if (figure_id == "fig2") {
    auto model = make_model("relu-toy");
    GridField field = sample_grid(*model, {{-3.0, 3.0, 201}, {-3.0, 3.0, 201}});
    emit("fig2_grid.csv", grid_csv_string(field));
    return files;
  }
  if (figure_id == "fig3") {
    auto model = make_model("sigmoid-two-data-asym");
    GridField field =
        sample_grid(*model, {{-10.0, 10.0, 201}, {-10.0, 10.0, 201}});
    emit("fig3_grid.csv", grid_csv_string(field));
    return files;
  }
  if (figure_id == "fig4") {
    auto model = make_model("cex-infinite-critical");
    GridField field = sample_grid(*model, {{-7.0, 7.0, 1401}});
    emit("fig4_curve.csv", grid_csv_string(field));
    return files;
  }
  throw ConfigError("unknown figure id '" + figure_id +
                    "' (fig1 | fig2 | fig3 | fig4)");
}

}  // namespace flowscape
