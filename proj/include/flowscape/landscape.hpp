#pragma once

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "flowscape/model.hpp"

namespace flowscape {

enum class Connectivity { kFaceNeighbors, kFullNeighbors };
// "4-neighbor" / "8-neighbor" in 2-D; 2d resp. 3^d - 1 neighbors in d dims.
const char* to_string(Connectivity c);

struct AxisSpec {
  double lo = 0.0, hi = 0.0;
  int count = 0;  // samples along the axis, >= 2
};

// Fixes the model coordinates not covered by grid axes.
struct SliceSpec {
  Vector base;             // full model-dimension point
  std::vector<int> axes;   // model coordinate driven by each grid axis
};

// Dense rectangular sampling of a model over a window of at most 3 axes.
struct GridField {
  std::vector<AxisSpec> axes;
  std::vector<double> values;  // row-major: last axis fastest
  Connectivity connectivity = Connectivity::kFullNeighbors;

  int ndim() const { return static_cast<int>(axes.size()); }
  size_t node_count() const;
  size_t flat_index(const std::vector<int>& idx) const;
  std::vector<int> unflatten(size_t flat) const;
  double coord(int axis, int i) const;
  bool on_boundary(const std::vector<int>& idx) const;
};

inline constexpr size_t kDefaultNodeBudget = size_t{1} << 24;

// slice_spec may be empty for models whose dimension equals the grid's.
GridField sample_grid(const LossModel& model, const std::vector<AxisSpec>& axes,
                      const SliceSpec& slice = {},
                      Connectivity connectivity = Connectivity::kFullNeighbors,
                      size_t node_budget = kDefaultNodeBudget);

// Connected components of the discrete sublevel set {values <= level}.
struct ComponentLabeling {
  double level = 0.0;
  std::vector<int32_t> labels;  // -1 above level, else component id
  int component_count = 0;
  std::vector<bool> touches_boundary;  // per component
  std::vector<size_t> component_sizes;

  nlohmann::ordered_json to_json() const;
};

ComponentLabeling sublevel_components(const GridField& field, double level);

struct SetwiseCertificate {
  bool certified = false;
  bool strict = false;
  // True when the component touches the window edge, so only the weaker
  // within-window statement is certified.
  bool within_window = false;
  double component_max = 0.0;
  double component_min = 0.0;
  double ring_min = 0.0;   // min over the dilation ring (if nonempty)
  bool ring_empty = true;
  std::optional<size_t> refutation_node;  // flat index of the witness
  // Set when a global infimum was supplied: inf over the component exceeds it.
  std::optional<bool> spurious;
  // Max over the component is attained on its discrete boundary.
  bool max_on_discrete_boundary = false;

  nlohmann::ordered_json to_json() const;
};

// Dilates the component by `margin` grid steps (in the field's connectivity)
// and certifies min over the ring >= max over the component (strict: >).
SetwiseCertificate certify_setwise_min(
    const GridField& field, const ComponentLabeling& labeling, int component_id,
    int margin, std::optional<double> global_infimum = std::nullopt);

enum class CriticalClass { kMinimum, kStrictSaddle, kMaximum, kDegenerate };
const char* to_string(CriticalClass c);

struct CriticalRecord {
  Vector point;
  double value = 0.0;
  double grad_norm = 0.0;
  double eig_min = 0.0;
  double eig_max = 0.0;
  CriticalClass classification = CriticalClass::kDegenerate;
  bool newton_fallback = false;  // gradient polishing was used

  nlohmann::ordered_json to_json() const;
};

// Scale-aware sign calls: tolerance 1e-8 * (1 + |eig_max|).
CriticalClass classify_from_eigs(double eig_min, double eig_max);

// Records at the parametric critical points of the completion model:
// c1..c3 at each t (t != 0 required), plus the origin component once.
std::vector<CriticalRecord> enumerate_critical_mc(
    const LossModel& model, const std::vector<double>& t_samples);

struct CriticalSearchResult {
  std::vector<CriticalRecord> records;   // deduplicated within 1e-6
  std::vector<double> distinct_values;   // clustered critical values
  int failures = 0;                      // seeds that did not polish
};

// Damped Newton polishing of each seed down to |grad| <= grad_tol, with a
// gradient-step fallback when the Newton system is singular or uphill.
CriticalSearchResult find_critical_numeric(const LossModel& model,
                                           const std::vector<Vector>& seeds,
                                           double grad_tol = 1e-10,
                                           int max_iters = 200);

struct CoercivityReport {
  std::vector<double> radii;
  std::vector<double> min_values;
  // True when per-radius minima fail to increase across the top half.
  bool non_coercive_evidence = false;

  nlohmann::ordered_json to_json() const;
};

// Min of f over seeded sphere samples per radius, each polished by a few
// projected-descent steps on the sphere so thin low-lying valleys are found.
CoercivityReport coercivity_probe(const LossModel& model,
                                  const std::vector<double>& radii,
                                  int samples_per_radius, uint64_t seed = 0,
                                  int polish_iters = 200);

// ---------------------------------------------------------------------------
// Grid I/O. CSV layouts (documented in the README):
//   1-D: header "x,f", one node per row.
//   2-D: first row "" followed by the axis-0 coordinates; each later row
//        holds the axis-1 coordinate then the values (axis-0 varies along
//        the row).
//   3-D: long format "x_0,x_1,x_2,f".
// The binary format has a 16-byte header (magic "FSGRID01", u32 version,
// u32 ndim), then per axis f64 lo, f64 hi, u64 count, then u32 connectivity,
// then the values as little-endian f64 in row-major order.
void write_grid_csv(const GridField& field, std::ostream& os);
void write_grid_binary(const GridField& field, std::ostream& os);
GridField read_grid_binary(std::istream& is);

}  // namespace flowscape
