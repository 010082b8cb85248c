#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "flowscape/diagnostics.hpp"
#include "flowscape/harness.hpp"
#include "flowscape/io.hpp"
#include "flowscape/landscape.hpp"
#include "flowscape/registry.hpp"
#include "flowscape/rng.hpp"

namespace flowscape {

namespace {

Vector parse_vector(const std::string& csv) {
  std::vector<double> vals;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      vals.push_back(std::stod(tok));
    } catch (...) {
      throw ConfigError("cannot parse number '" + tok + "'");
    }
  }
  Vector v(vals.size());
  for (size_t i = 0; i < vals.size(); ++i) v[i] = vals[i];
  return v;
}

std::vector<int> parse_ints(const std::string& csv) {
  std::vector<int> vals;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      vals.push_back(std::stoi(tok));
    } catch (...) {
      throw ConfigError("cannot parse integer '" + tok + "'");
    }
  }
  return vals;
}

std::vector<AxisSpec> parse_axes(const std::string& bounds,
                                 const std::string& res) {
  std::vector<AxisSpec> axes;
  std::stringstream ss(bounds);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const size_t colon = tok.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("bounds must look like lo:hi[,lo:hi...]");
    }
    AxisSpec a;
    a.lo = std::stod(tok.substr(0, colon));
    a.hi = std::stod(tok.substr(colon + 1));
    axes.push_back(a);
  }
  const std::vector<int> counts = parse_ints(res);
  if (counts.size() != axes.size()) {
    throw ConfigError("--res must list one count per bounds axis");
  }
  for (size_t i = 0; i < axes.size(); ++i) axes[i].count = counts[i];
  return axes;
}

nlohmann::json parse_params(const std::string& params) {
  if (params.empty()) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(params);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("--params: ") + e.what());
  }
}

void emit(const std::string& out, const std::string& body) {
  if (out.empty()) {
    std::cout << body;
  } else {
    write_text_file(out, body);
  }
}

struct TrajectoryArgs {
  std::string model;
  std::string params;
  std::string method = "euler";
  std::string x0;
  uint64_t seed = 0;
  double step = 0.01;
  int iters = 10000;
  double t_end = 10.0;
  double rel_tol = 1e-9;
  double abs_tol = 1e-12;
  double tau = 0.1;
  int steps = 1000;
  double inner_tol = 1e-10;
  int stride = 1;
  double critical_tol = 1e-8;
  double divergence_guard = 1e6;
};

void add_trajectory_flags(CLI::App* cmd, TrajectoryArgs& a) {
  cmd->add_option("--model", a.model, "registry model name")->required();
  cmd->add_option("--params", a.params, "model parameters as JSON");
  cmd->add_option("--method", a.method, "euler | flow | prox");
  cmd->add_option("--x0", a.x0, "initial point, comma separated");
  cmd->add_option("--seed", a.seed, "seed for the random init when no --x0");
  cmd->add_option("--step", a.step, "euler step size");
  cmd->add_option("--iters", a.iters, "euler iteration count");
  cmd->add_option("--t-end", a.t_end, "flow horizon");
  cmd->add_option("--rel-tol", a.rel_tol, "flow relative tolerance");
  cmd->add_option("--abs-tol", a.abs_tol, "flow absolute tolerance");
  cmd->add_option("--tau", a.tau, "prox step tau");
  cmd->add_option("--steps", a.steps, "prox outer steps");
  cmd->add_option("--inner-tol", a.inner_tol, "prox inner tolerance");
  cmd->add_option("--stride", a.stride, "euler record stride");
  cmd->add_option("--critical-tol", a.critical_tol, "stationarity stop");
  cmd->add_option("--guard", a.divergence_guard, "divergence guard radius");
}

std::pair<ModelPtr, TrajectoryRecord> run_trajectory(const TrajectoryArgs& a) {
  ModelPtr model = make_model(a.model, parse_params(a.params));
  Vector x0;
  if (!a.x0.empty()) {
    x0 = parse_vector(a.x0);
  } else {
    CounterRng rng(substream_key(a.seed, 0));
    x0.resize(model->dim());
    for (int i = 0; i < model->dim(); ++i) x0[i] = rng.uniform(-1.0, 1.0);
  }
  GuardSettings guards{a.critical_tol, a.divergence_guard};
  TrajectoryRecord rec;
  if (a.method == "euler") {
    rec = euler_descent(*model, x0, a.step, a.iters, guards, a.stride);
  } else if (a.method == "flow") {
    FlowOptions opts;
    opts.rel_tol = a.rel_tol;
    opts.abs_tol = a.abs_tol;
    opts.guards = guards;
    rec = gradient_flow(*model, x0, a.t_end, opts);
  } else if (a.method == "prox") {
    ProxSchedule sched{a.tau, a.inner_tol, 400, a.steps};
    rec = minimizing_movement(*model, x0, sched, guards).record();
  } else {
    throw ConfigError("unknown method '" + a.method + "'");
  }
  return {std::move(model), std::move(rec)};
}

int run_cli(int argc, char** argv) {
  CLI::App app{"landscape and subgradient-trajectory toolkit"};
  app.require_subcommand(1);

  // --- run
  auto* run_cmd = app.add_subcommand("run", "run a configured experiment");
  std::string config_path, run_out = ".";
  uint64_t run_seed = 0;
  bool run_seed_set = false;
  unsigned run_threads = 0;
  run_cmd->add_option("config", config_path, "config file (.toml or .json)")
      ->required();
  run_cmd->add_option("--out", run_out, "output directory");
  run_cmd->add_option("--seed", run_seed, "override the config seed")
      ->each([&](const std::string&) { run_seed_set = true; });
  run_cmd->add_option("--threads", run_threads, "worker threads (0 = auto)");

  // --- trajectory
  auto* traj_cmd = app.add_subcommand("trajectory", "integrate one trajectory");
  TrajectoryArgs traj_args;
  add_trajectory_flags(traj_cmd, traj_args);
  std::string traj_out, traj_format = "csv";
  traj_cmd->add_option("--out", traj_out, "output file (default stdout)");
  traj_cmd->add_option("--format", traj_format, "csv | json");

  // --- grid
  auto* grid_cmd = app.add_subcommand("grid", "sample a model over a window");
  std::string grid_model, grid_params, grid_bounds, grid_res;
  std::string grid_slice_base, grid_slice_axes;
  std::string grid_out, grid_format = "csv";
  int grid_conn = 8;
  double grid_level = 0.0;
  bool grid_level_set = false;
  grid_cmd->add_option("--model", grid_model, "registry model name")->required();
  grid_cmd->add_option("--params", grid_params, "model parameters as JSON");
  grid_cmd->add_option("--bounds", grid_bounds, "lo:hi per axis")->required();
  grid_cmd->add_option("--res", grid_res, "samples per axis")->required();
  grid_cmd->add_option("--slice-base", grid_slice_base,
                       "full-dimension base point for slicing");
  grid_cmd->add_option("--slice-axes", grid_slice_axes,
                       "model coordinate driven by each grid axis");
  grid_cmd->add_option("--connectivity", grid_conn, "4 or 8 (2-D naming)");
  grid_cmd
      ->add_option("--level", grid_level,
                   "also label sublevel components at this level")
      ->each([&](const std::string&) { grid_level_set = true; });
  grid_cmd->add_option("--out", grid_out, "output file (default stdout)");
  grid_cmd->add_option("--format", grid_format, "csv | json | bin");
  uint64_t grid_seed = 0;
  grid_cmd->add_option("--seed", grid_seed, "unused; accepted for uniformity");

  // --- critical
  auto* crit_cmd =
      app.add_subcommand("critical", "critical points: parametric or polished");
  std::string crit_model, crit_params, crit_t, crit_center, crit_out,
      crit_format = "json";
  int crit_num_seeds = 16;
  double crit_radius = 1.0, crit_grad_tol = 1e-10;
  uint64_t crit_seed = 0;
  crit_cmd->add_option("--model", crit_model, "registry model name")->required();
  crit_cmd->add_option("--params", crit_params, "model parameters as JSON");
  crit_cmd->add_option("--t", crit_t,
                       "parameter values for the completion components");
  crit_cmd->add_option("--num-seeds", crit_num_seeds, "random polish seeds");
  crit_cmd->add_option("--center", crit_center, "seed box center");
  crit_cmd->add_option("--radius", crit_radius, "seed box half width");
  crit_cmd->add_option("--grad-tol", crit_grad_tol, "polish gradient tolerance");
  crit_cmd->add_option("--seed", crit_seed, "seed for the polish seeds");
  crit_cmd->add_option("--out", crit_out, "output file (default stdout)");
  crit_cmd->add_option("--format", crit_format, "csv | json");

  // --- diagnose
  auto* diag_cmd = app.add_subcommand("diagnose", "run a trajectory checker");
  TrajectoryArgs diag_args;
  add_trajectory_flags(diag_cmd, diag_args);
  std::string diag_check, diag_out, diag_format = "json";
  double diag_eps = 1e-3, diag_tol = 0.0;
  diag_cmd
      ->add_option("--check", diag_check,
                   "balancedness-sensing | balancedness-l1 | l1-bound | "
                   "frozen-block | sign-stability | boundedness | "
                   "epsilon-critical")
      ->required();
  diag_cmd->add_option("--eps", diag_eps, "epsilon for epsilon-critical");
  diag_cmd->add_option("--tol", diag_tol, "override check tolerance");
  diag_cmd->add_option("--out", diag_out, "output file (default stdout)");
  diag_cmd->add_option("--format", diag_format, "json");

  // --- reproduce
  auto* rep_cmd = app.add_subcommand("reproduce", "emit figure data files");
  std::string rep_figure, rep_out = "out";
  uint64_t rep_seed = 42;
  rep_cmd->add_option("figure", rep_figure, "fig1 | fig2 | fig3 | fig4")
      ->required();
  rep_cmd->add_option("--out", rep_out, "output directory");
  rep_cmd->add_option("--seed", rep_seed, "experiment seed (fig1)");
  std::string rep_format = "csv";
  rep_cmd->add_option("--format", rep_format, "csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // bad flags are configuration errors
  }

  if (run_cmd->parsed()) {
    ExperimentConfig config = load_config(config_path);
    if (run_seed_set) config.seed = run_seed;
    RunManifest manifest = run_experiment(config, run_threads, run_out);
    std::cout << "trials=" << config.trials
              << " stuck_fraction=" << format_double(manifest.stuck_fraction)
              << " manifest=" << run_out << "/" << config.manifest_name
              << "\n";
    return 0;
  }

  if (traj_cmd->parsed()) {
    auto [model, rec] = run_trajectory(traj_args);
    std::ostringstream os;
    if (traj_format == "json") {
      os << trajectory_to_json(rec).dump(2) << "\n";
    } else {
      write_trajectory_csv(rec, os);
    }
    emit(traj_out, os.str());
    return 0;
  }

  if (grid_cmd->parsed()) {
    ModelPtr model = make_model(grid_model, parse_params(grid_params));
    const auto axes = parse_axes(grid_bounds, grid_res);
    SliceSpec slice;
    if (!grid_slice_base.empty()) {
      slice.base = parse_vector(grid_slice_base);
      if (grid_slice_axes.empty()) {
        throw ConfigError("--slice-base needs --slice-axes");
      }
      slice.axes = parse_ints(grid_slice_axes);
    }
    const Connectivity conn = grid_conn == 4 ? Connectivity::kFaceNeighbors
                                             : Connectivity::kFullNeighbors;
    GridField field = sample_grid(*model, axes, slice, conn);
    if (grid_format == "bin") {
      if (grid_out.empty()) throw ConfigError("--format bin needs --out");
      std::ofstream os(grid_out, std::ios::binary);
      if (!os) throw ConfigError("cannot open '" + grid_out + "'");
      write_grid_binary(field, os);
    } else if (grid_format == "json") {
      nlohmann::ordered_json j;
      std::vector<nlohmann::ordered_json> axes_json;
      for (const AxisSpec& a : field.axes) {
        axes_json.push_back({{"lo", a.lo}, {"hi", a.hi}, {"count", a.count}});
      }
      j["axes"] = axes_json;
      j["connectivity"] = to_string(field.connectivity);
      j["values"] = field.values;
      emit(grid_out, j.dump(2) + "\n");
    } else {
      std::ostringstream os;
      write_grid_csv(field, os);
      emit(grid_out, os.str());
    }
    if (grid_level_set) {
      ComponentLabeling lab = sublevel_components(field, grid_level);
      const std::string body = lab.to_json().dump(2) + "\n";
      if (grid_out.empty()) {
        std::cout << body;
      } else {
        write_text_file(grid_out + ".components.json", body);
      }
    }
    return 0;
  }

  if (crit_cmd->parsed()) {
    ModelPtr model = make_model(crit_model, parse_params(crit_params));
    std::vector<CriticalRecord> records;
    int failures = 0;
    std::vector<double> distinct;
    if (!crit_t.empty()) {
      const Vector ts = parse_vector(crit_t);
      std::vector<double> t_samples(ts.data(), ts.data() + ts.size());
      records = enumerate_critical_mc(*model, t_samples);
    } else {
      Vector center = crit_center.empty() ? Vector::Zero(model->dim())
                                          : parse_vector(crit_center);
      if (center.size() != model->dim()) {
        throw ConfigError("--center dimension mismatch");
      }
      CounterRng rng(substream_key(crit_seed, 0xC417ULL));
      std::vector<Vector> seeds;
      for (int s = 0; s < crit_num_seeds; ++s) {
        Vector x = center;
        for (int i = 0; i < model->dim(); ++i) {
          x[i] += rng.uniform(-crit_radius, crit_radius);
        }
        seeds.push_back(std::move(x));
      }
      CriticalSearchResult res =
          find_critical_numeric(*model, seeds, crit_grad_tol);
      records = std::move(res.records);
      failures = res.failures;
      distinct = std::move(res.distinct_values);
    }
    for (const CriticalRecord& r : records) {
      std::cout << "value=" << format_double(r.value)
                << " grad_norm=" << format_double(r.grad_norm) << " class="
                << to_string(r.classification) << " point=";
      for (int i = 0; i < r.point.size(); ++i) {
        if (i) std::cout << ",";
        std::cout << format_double(r.point[i]);
      }
      std::cout << "\n";
    }
    if (!crit_out.empty()) {
      std::ostringstream os;
      if (crit_format == "csv") {
        os << "value,grad_norm,eig_min,eig_max,classification\n";
        for (const CriticalRecord& r : records) {
          os << format_double(r.value) << "," << format_double(r.grad_norm)
             << "," << format_double(r.eig_min) << ","
             << format_double(r.eig_max) << "," << to_string(r.classification)
             << "\n";
        }
      } else {
        nlohmann::ordered_json j;
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const CriticalRecord& r : records) arr.push_back(r.to_json());
        j["records"] = arr;
        j["failures"] = failures;
        j["distinct_values"] = distinct;
        os << j.dump(2) << "\n";
      }
      write_text_file(crit_out, os.str());
    }
    return 0;
  }

  if (diag_cmd->parsed()) {
    nlohmann::ordered_json out;
    if (diag_check == "epsilon-critical") {
      ModelPtr model = make_model(diag_args.model, parse_params(diag_args.params));
      Vector x0 = diag_args.x0.empty() ? Vector::Zero(model->dim())
                                       : parse_vector(diag_args.x0);
      EpsilonCriticalResult res = epsilon_critical_search(*model, x0, diag_eps);
      out["value"] = res.value;
      out["grad_norm"] = res.grad_norm;
      out["time"] = res.time;
      std::vector<double> xv(res.x.data(), res.x.data() + res.x.size());
      out["x"] = xv;
    } else {
      auto [model, rec] = run_trajectory(diag_args);
      if (diag_check == "balancedness-sensing") {
        out = check_balancedness_sensing(*model, rec,
                                         diag_tol > 0 ? diag_tol : 1e-5)
                  .to_json();
      } else if (diag_check == "balancedness-l1") {
        out = check_balancedness_l1(*model, rec, diag_args.tau, diag_tol)
                  .to_json();
      } else if (diag_check == "l1-bound") {
        out = check_l1_norm_bound(*model, rec).to_json();
      } else if (diag_check == "frozen-block") {
        out = check_frozen_block(*model, rec, diag_tol > 0 ? diag_tol : 1e-6)
                  .to_json();
      } else if (diag_check == "sign-stability") {
        SignStabilityReport rep = check_sign_stability(*model, rec);
        out = rep.report.to_json();
        out["stabilization_time"] = rep.stabilization_time;
        out["monotone_direction"] = rep.monotone_direction;
        out["monotone_violation"] = rep.monotone_violation;
      } else if (diag_check == "boundedness") {
        out = classify_boundedness(rec).to_json();
      } else {
        throw ConfigError("unknown check '" + diag_check + "'");
      }
    }
    emit(diag_out, out.dump(2) + "\n");
    return 0;
  }

  if (rep_cmd->parsed()) {
    const auto files = reproduce_figure(rep_figure, rep_out, rep_seed);
    for (const std::string& f : files) std::cout << f << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace flowscape
