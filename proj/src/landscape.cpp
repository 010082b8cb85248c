#include "flowscape/landscape.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

#include "flowscape/models.hpp"
#include "flowscape/parallel.hpp"
#include "flowscape/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary grid format assumes a little-endian host");

namespace flowscape {

const char* to_string(Connectivity c) {
  return c == Connectivity::kFaceNeighbors ? "face" : "full";
}

const char* to_string(CriticalClass c) {
  switch (c) {
    case CriticalClass::kMinimum: return "minimum";
    case CriticalClass::kStrictSaddle: return "strict_saddle";
    case CriticalClass::kMaximum: return "maximum";
    case CriticalClass::kDegenerate: return "degenerate";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// GridField

size_t GridField::node_count() const {
  size_t n = 1;
  for (const AxisSpec& a : axes) n *= static_cast<size_t>(a.count);
  return n;
}

size_t GridField::flat_index(const std::vector<int>& idx) const {
  size_t flat = 0;
  for (size_t a = 0; a < axes.size(); ++a) {
    flat = flat * axes[a].count + idx[a];
  }
  return flat;
}

std::vector<int> GridField::unflatten(size_t flat) const {
  std::vector<int> idx(axes.size());
  for (size_t a = axes.size(); a-- > 0;) {
    idx[a] = static_cast<int>(flat % axes[a].count);
    flat /= axes[a].count;
  }
  return idx;
}

double GridField::coord(int axis, int i) const {
  const AxisSpec& a = axes[axis];
  if (a.count == 1) return a.lo;
  return a.lo + (a.hi - a.lo) * static_cast<double>(i) / (a.count - 1);
}

bool GridField::on_boundary(const std::vector<int>& idx) const {
  for (size_t a = 0; a < axes.size(); ++a) {
    if (idx[a] == 0 || idx[a] == axes[a].count - 1) return true;
  }
  return false;
}

GridField sample_grid(const LossModel& model, const std::vector<AxisSpec>& axes,
                      const SliceSpec& slice, Connectivity connectivity,
                      size_t node_budget) {
  if (axes.empty() || axes.size() > 3) {
    throw ConfigError("sample_grid: 1 to 3 axes supported");
  }
  for (const AxisSpec& a : axes) {
    if (a.count < 2) throw ConfigError("sample_grid: resolution must be >= 2");
    if (!(a.hi > a.lo)) throw ConfigError("sample_grid: need hi > lo");
  }

  GridField field;
  field.axes = axes;
  field.connectivity = connectivity;
  const size_t n = field.node_count();
  if (n > node_budget) {
    throw BudgetError("sample_grid: " + std::to_string(n) +
                      " nodes exceed the budget of " +
                      std::to_string(node_budget));
  }

  Vector base;
  std::vector<int> map_axes;
  if (slice.axes.empty()) {
    if (model.dim() != static_cast<int>(axes.size())) {
      throw ShapeError("sample_grid: model dimension " +
                       std::to_string(model.dim()) +
                       " needs a slice specification");
    }
    base = Vector::Zero(model.dim());
    map_axes.resize(axes.size());
    std::iota(map_axes.begin(), map_axes.end(), 0);
  } else {
    if (slice.base.size() != model.dim()) {
      throw ShapeError("sample_grid: slice base has wrong dimension");
    }
    if (slice.axes.size() != axes.size()) {
      throw ShapeError("sample_grid: one model coordinate per grid axis");
    }
    base = slice.base;
    map_axes = slice.axes;
    for (int ax : map_axes) {
      if (ax < 0 || ax >= model.dim()) {
        throw ShapeError("sample_grid: slice axis out of range");
      }
    }
  }

  field.values.assign(n, 0.0);
  parallel_for(n, [&](size_t flat) {
    std::vector<int> idx = field.unflatten(flat);
    Vector x = base;
    for (size_t a = 0; a < map_axes.size(); ++a) {
      x[map_axes[a]] = field.coord(static_cast<int>(a), idx[a]);
    }
    field.values[flat] = model.value(x);
  });
  for (double v : field.values) {
    if (!std::isfinite(v)) {
      throw NumericError("sample_grid: non-finite model value on the grid");
    }
  }
  return field;
}

// ---------------------------------------------------------------------------
// Sublevel components (union-find)

namespace {

class UnionFind {
 public:
  explicit UnionFind(size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), size_t{0});
  }
  size_t find(size_t i) {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }
  void merge(size_t a, size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<size_t> parent_;
};

// Enumerates neighbor offsets for the connectivity: face neighbors only, or
// the full (3^d - 1)-neighborhood.
std::vector<std::vector<int>> neighbor_offsets(int ndim, Connectivity c) {
  std::vector<std::vector<int>> offs;
  if (c == Connectivity::kFaceNeighbors) {
    for (int a = 0; a < ndim; ++a) {
      for (int s : {-1, 1}) {
        std::vector<int> o(ndim, 0);
        o[a] = s;
        offs.push_back(o);
      }
    }
    return offs;
  }
  std::vector<int> o(ndim, -1);
  while (true) {
    if (std::any_of(o.begin(), o.end(), [](int v) { return v != 0; })) {
      offs.push_back(o);
    }
    int a = ndim - 1;
    while (a >= 0 && o[a] == 1) o[a--] = -1;
    if (a < 0) break;
    ++o[a];
  }
  return offs;
}

}  // namespace

ComponentLabeling sublevel_components(const GridField& field, double level) {
  if (!std::isfinite(level)) {
    throw ConfigError("sublevel_components: level must be finite");
  }
  const size_t n = field.node_count();
  ComponentLabeling lab;
  lab.level = level;
  lab.labels.assign(n, -1);

  UnionFind uf(n);
  const auto offs = neighbor_offsets(field.ndim(), field.connectivity);
  std::vector<int> idx, nb(field.ndim());
  for (size_t flat = 0; flat < n; ++flat) {
    if (field.values[flat] > level) continue;
    idx = field.unflatten(flat);
    for (const auto& o : offs) {
      bool ok = true;
      for (int a = 0; a < field.ndim(); ++a) {
        nb[a] = idx[a] + o[a];
        if (nb[a] < 0 || nb[a] >= field.axes[a].count) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      const size_t nflat = field.flat_index(nb);
      if (field.values[nflat] <= level) uf.merge(flat, nflat);
    }
  }

  // Deterministic labels in order of first appearance.
  std::vector<int32_t> root_label(n, -1);
  int32_t next = 0;
  for (size_t flat = 0; flat < n; ++flat) {
    if (field.values[flat] > level) continue;
    const size_t root = uf.find(flat);
    if (root_label[root] < 0) {
      root_label[root] = next++;
      lab.touches_boundary.push_back(false);
      lab.component_sizes.push_back(0);
    }
    const int32_t l = root_label[root];
    lab.labels[flat] = l;
    lab.component_sizes[l] += 1;
    if (field.on_boundary(field.unflatten(flat))) {
      lab.touches_boundary[l] = true;
    }
  }
  lab.component_count = next;
  return lab;
}

nlohmann::ordered_json ComponentLabeling::to_json() const {
  nlohmann::ordered_json j;
  j["level"] = level;
  j["component_count"] = component_count;
  j["component_sizes"] = component_sizes;
  j["touches_boundary"] = touches_boundary;
  j["labels"] = labels;
  return j;
}

// ---------------------------------------------------------------------------
// Setwise certification

nlohmann::ordered_json SetwiseCertificate::to_json() const {
  nlohmann::ordered_json j;
  j["certified"] = certified;
  j["strict"] = strict;
  j["within_window"] = within_window;
  j["component_max"] = component_max;
  j["component_min"] = component_min;
  j["ring_empty"] = ring_empty;
  if (!ring_empty) j["ring_min"] = ring_min;
  if (refutation_node) j["refutation_node"] = *refutation_node;
  if (spurious) j["spurious"] = *spurious;
  j["max_on_discrete_boundary"] = max_on_discrete_boundary;
  return j;
}

SetwiseCertificate certify_setwise_min(const GridField& field,
                                       const ComponentLabeling& labeling,
                                       int component_id, int margin,
                                       std::optional<double> global_infimum) {
  if (component_id < 0 || component_id >= labeling.component_count) {
    throw ConfigError("certify_setwise_min: no such component");
  }
  if (margin < 1) throw ConfigError("certify_setwise_min: margin must be >= 1");
  const size_t n = field.node_count();

  SetwiseCertificate cert;
  cert.within_window = labeling.touches_boundary[component_id];

  cert.component_max = -std::numeric_limits<double>::infinity();
  cert.component_min = std::numeric_limits<double>::infinity();
  std::vector<char> in_comp(n, 0);
  std::vector<size_t> frontier;
  for (size_t flat = 0; flat < n; ++flat) {
    if (labeling.labels[flat] != component_id) continue;
    in_comp[flat] = 1;
    frontier.push_back(flat);
    cert.component_max = std::max(cert.component_max, field.values[flat]);
    cert.component_min = std::min(cert.component_min, field.values[flat]);
  }

  // Max over the component attained on its discrete boundary (component
  // nodes adjacent to a non-component node or to the window edge)?
  const auto offs = neighbor_offsets(field.ndim(), field.connectivity);
  double boundary_max = -std::numeric_limits<double>::infinity();
  std::vector<int> nb(field.ndim());
  for (size_t flat : frontier) {
    const auto idx = field.unflatten(flat);
    bool boundary = field.on_boundary(idx);
    if (!boundary) {
      for (const auto& o : offs) {
        for (int a = 0; a < field.ndim(); ++a) nb[a] = idx[a] + o[a];
        bool inside = true;
        for (int a = 0; a < field.ndim(); ++a) {
          if (nb[a] < 0 || nb[a] >= field.axes[a].count) inside = false;
        }
        if (inside && !in_comp[field.flat_index(nb)]) {
          boundary = true;
          break;
        }
      }
    }
    if (boundary) boundary_max = std::max(boundary_max, field.values[flat]);
  }
  cert.max_on_discrete_boundary =
      boundary_max >=
      cert.component_max - 1e-12 * (1.0 + std::abs(cert.component_max));

  // Dilate by `margin` rounds of the neighborhood; collect the ring.
  std::vector<char> reached = in_comp;
  std::vector<size_t> ring;
  std::vector<size_t> current = frontier;
  for (int round = 0; round < margin; ++round) {
    std::vector<size_t> nextf;
    for (size_t flat : current) {
      const auto idx = field.unflatten(flat);
      for (const auto& o : offs) {
        bool inside = true;
        for (int a = 0; a < field.ndim(); ++a) {
          nb[a] = idx[a] + o[a];
          if (nb[a] < 0 || nb[a] >= field.axes[a].count) inside = false;
        }
        if (!inside) continue;
        const size_t nflat = field.flat_index(nb);
        if (!reached[nflat]) {
          reached[nflat] = 1;
          ring.push_back(nflat);
          nextf.push_back(nflat);
        }
      }
    }
    current = std::move(nextf);
  }

  cert.ring_empty = ring.empty();
  if (cert.ring_empty) {
    // Nothing outside the component inside the window: only the weak
    // within-window statement holds, vacuously.
    cert.certified = true;
    cert.strict = false;
    cert.within_window = true;
  } else {
    cert.ring_min = std::numeric_limits<double>::infinity();
    size_t witness = 0;
    for (size_t flat : ring) {
      if (field.values[flat] < cert.ring_min) {
        cert.ring_min = field.values[flat];
        witness = flat;
      }
    }
    cert.certified = cert.ring_min >= cert.component_max;
    cert.strict = cert.ring_min > cert.component_max;
    if (!cert.certified) cert.refutation_node = witness;
  }
  if (global_infimum) {
    cert.spurious = cert.certified && cert.component_min > *global_infimum;
  }
  return cert;
}

// ---------------------------------------------------------------------------
// Critical records

CriticalClass classify_from_eigs(double eig_min, double eig_max) {
  const double tol = 1e-8 * (1.0 + std::abs(eig_max));
  const bool has_neg = eig_min < -tol;
  const bool has_pos = eig_max > tol;
  if (has_neg && has_pos) return CriticalClass::kStrictSaddle;
  if (!has_neg && has_pos) return CriticalClass::kMinimum;
  if (has_neg && !has_pos) return CriticalClass::kMaximum;
  return CriticalClass::kDegenerate;
}

nlohmann::ordered_json CriticalRecord::to_json() const {
  nlohmann::ordered_json j;
  j["point"] = std::vector<double>(point.data(), point.data() + point.size());
  j["value"] = value;
  j["grad_norm"] = grad_norm;
  j["eig_min"] = eig_min;
  j["eig_max"] = eig_max;
  j["classification"] = to_string(classification);
  if (newton_fallback) j["newton_fallback"] = true;
  return j;
}

namespace {

CriticalRecord record_at(const LossModel& model, const Vector& x) {
  CriticalRecord rec;
  rec.point = x;
  rec.value = model.value(x);
  rec.grad_norm = model.subgradient(x).vector.norm();
  Eigen::SelfAdjointEigenSolver<Matrix> es(model.hessian(x));
  rec.eig_min = es.eigenvalues().minCoeff();
  rec.eig_max = es.eigenvalues().maxCoeff();
  rec.classification = classify_from_eigs(rec.eig_min, rec.eig_max);
  return rec;
}

}  // namespace

std::vector<CriticalRecord> enumerate_critical_mc(
    const LossModel& model, const std::vector<double>& t_samples) {
  const auto* mc = dynamic_cast<const MatrixCompletionEx1*>(&model);
  if (!mc) {
    throw StructureError("enumerate_critical_mc: needs matrix-completion-ex1");
  }
  std::vector<CriticalRecord> out;
  for (double t : t_samples) {
    if (t == 0.0) {
      throw ShapeError("enumerate_critical_mc: t must be nonzero");
    }
    out.push_back(record_at(model, MatrixCompletionEx1::c1_point(t)));
    out.push_back(record_at(model, MatrixCompletionEx1::c2_point(t)));
    out.push_back(record_at(model, MatrixCompletionEx1::c3_point(t)));
  }
  out.push_back(record_at(model, MatrixCompletionEx1::c4_point()));
  return out;
}

CriticalSearchResult find_critical_numeric(const LossModel& model,
                                           const std::vector<Vector>& seeds,
                                           double grad_tol, int max_iters) {
  if (model.smoothness() != Smoothness::kSmooth) {
    throw StructureError("find_critical_numeric: model must be smooth");
  }
  CriticalSearchResult result;
  for (const Vector& seed : seeds) {
    Vector x = seed;
    bool used_fallback = false;
    bool converged = false;
    Vector g = model.subgradient(x).vector;
    double merit = g.squaredNorm();
    for (int it = 0; it < max_iters; ++it) {
      if (g.norm() <= grad_tol) {
        converged = true;
        break;
      }
      const Matrix h = model.hessian(x);
      Vector dir = h.ldlt().solve(-g);
      bool fallback = !dir.allFinite();
      if (!fallback) {
        // Guard against a Newton step that points uphill for |grad|^2.
        const Vector hg = h * g;
        if (dir.dot(hg) >= 0.0) fallback = true;
      }
      if (fallback) {
        dir = -(h * g);  // steepest descent on |grad|^2 / 2
        used_fallback = true;
        const double dn = dir.norm();
        if (dn == 0.0) break;
        dir *= std::min(1.0, 1.0 / dn);
      }
      double step = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 40; ++ls) {
        Vector xn = x + step * dir;
        Vector gn = model.subgradient(xn).vector;
        const double mn = gn.squaredNorm();
        if (mn < merit * (1.0 - 1e-4 * step) || mn < grad_tol * grad_tol) {
          x = std::move(xn);
          g = std::move(gn);
          merit = mn;
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
    }
    if (!converged && g.norm() <= grad_tol) converged = true;
    if (!converged) {
      ++result.failures;
      continue;
    }
    // Deduplicate within 1e-6.
    bool duplicate = false;
    for (const CriticalRecord& r : result.records) {
      if ((r.point - x).norm() <= 1e-6) {
        duplicate = true;
        break;
      }
    }
    if (duplicate) continue;
    CriticalRecord rec = record_at(model, x);
    rec.newton_fallback = used_fallback;
    result.records.push_back(std::move(rec));
  }

  std::vector<double> vals;
  for (const auto& r : result.records) vals.push_back(r.value);
  std::sort(vals.begin(), vals.end());
  for (double v : vals) {
    if (result.distinct_values.empty() ||
        v - result.distinct_values.back() >
            1e-6 + 1e-9 * std::abs(v)) {
      result.distinct_values.push_back(v);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Coercivity probe

nlohmann::ordered_json CoercivityReport::to_json() const {
  nlohmann::ordered_json j;
  j["radii"] = radii;
  j["min_values"] = min_values;
  j["non_coercive_evidence"] = non_coercive_evidence;
  return j;
}

CoercivityReport coercivity_probe(const LossModel& model,
                                  const std::vector<double>& radii,
                                  int samples_per_radius, uint64_t seed,
                                  int polish_iters) {
  for (size_t i = 1; i < radii.size(); ++i) {
    if (!(radii[i] > radii[i - 1])) {
      throw ConfigError("coercivity_probe: radii must be increasing");
    }
  }
  if (radii.empty() || radii[0] <= 0.0) {
    throw ConfigError("coercivity_probe: radii must be positive");
  }
  const int n = model.dim();

  // Projected descent restricted to the sphere of radius r.
  auto polish = [&](Vector x, double r) {
    double fx = model.value(x);
    double step = 0.1 * r;
    for (int it = 0; it < polish_iters; ++it) {
      Vector g = model.subgradient(x).vector;
      Vector xhat = x / r;
      Vector gt = g - g.dot(xhat) * xhat;
      if (gt.norm() <= 1e-12 * (1.0 + g.norm())) break;
      bool accepted = false;
      for (int ls = 0; ls < 30; ++ls) {
        Vector xn = x - step * gt;
        xn *= r / xn.norm();
        const double fn = model.value(xn);
        if (fn < fx) {
          x = std::move(xn);
          fx = fn;
          accepted = true;
          step *= 1.5;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
    }
    return fx;
  };

  CoercivityReport rep;
  rep.radii = radii;
  for (size_t ri = 0; ri < radii.size(); ++ri) {
    const double r = radii[ri];
    CounterRng rng(substream_key(seed, 0xC0E5ULL + ri));
    double best = std::numeric_limits<double>::infinity();
    Vector best_x;
    for (int s = 0; s < samples_per_radius; ++s) {
      Vector d(n);
      for (int i = 0; i < n; ++i) d[i] = rng.normal();
      const double dn = d.norm();
      if (dn == 0.0) continue;
      Vector x = (r / dn) * d;
      const double fx = model.value(x);
      if (fx < best) {
        best = fx;
        best_x = x;
      }
    }
    if (best_x.size() > 0 && polish_iters > 0) {
      best = std::min(best, polish(best_x, r));
    }
    rep.min_values.push_back(best);
  }

  // Evidence of non-coercivity: minima fail to increase across the top half.
  const size_t half = radii.size() / 2;
  bool increasing = radii.size() >= 2;
  for (size_t i = std::max<size_t>(half, 1); i < radii.size(); ++i) {
    if (!(rep.min_values[i] >
          rep.min_values[i - 1] + 1e-12 * (1.0 + std::abs(rep.min_values[i - 1])))) {
      increasing = false;
      break;
    }
  }
  rep.non_coercive_evidence = !increasing;
  return rep;
}

// ---------------------------------------------------------------------------
// Grid I/O

namespace {

void write_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& os, uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_pod(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw NumericError("grid binary: truncated stream");
  return v;
}

void print_number(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  os << buf;
}

}  // namespace

void write_grid_csv(const GridField& field, std::ostream& os) {
  const int nd = field.ndim();
  if (nd == 1) {
    os << "x,f\n";
    for (int i = 0; i < field.axes[0].count; ++i) {
      print_number(os, field.coord(0, i));
      os << ",";
      print_number(os, field.values[i]);
      os << "\n";
    }
    return;
  }
  if (nd == 2) {
    // Header row: axis-0 coordinates; one row per axis-1 node.
    const int n0 = field.axes[0].count, n1 = field.axes[1].count;
    for (int i = 0; i < n0; ++i) {
      os << ",";
      print_number(os, field.coord(0, i));
    }
    os << "\n";
    for (int j = 0; j < n1; ++j) {
      print_number(os, field.coord(1, j));
      for (int i = 0; i < n0; ++i) {
        os << ",";
        print_number(os, field.values[static_cast<size_t>(i) * n1 + j]);
      }
      os << "\n";
    }
    return;
  }
  os << "x_0,x_1,x_2,f\n";
  for (size_t flat = 0; flat < field.node_count(); ++flat) {
    const auto idx = field.unflatten(flat);
    for (int a = 0; a < nd; ++a) {
      print_number(os, field.coord(a, idx[a]));
      os << ",";
    }
    print_number(os, field.values[flat]);
    os << "\n";
  }
}

void write_grid_binary(const GridField& field, std::ostream& os) {
  os.write("FSGRID01", 8);
  write_u32(os, 1u);  // version
  write_u32(os, static_cast<uint32_t>(field.ndim()));
  for (const AxisSpec& a : field.axes) {
    write_f64(os, a.lo);
    write_f64(os, a.hi);
    write_u64(os, static_cast<uint64_t>(a.count));
  }
  write_u32(os, field.connectivity == Connectivity::kFaceNeighbors ? 0u : 1u);
  for (double v : field.values) write_f64(os, v);
}

GridField read_grid_binary(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, "FSGRID01", 8) != 0) {
    throw NumericError("grid binary: bad magic");
  }
  const uint32_t version = read_pod<uint32_t>(is);
  if (version != 1u) throw NumericError("grid binary: unsupported version");
  const uint32_t nd = read_pod<uint32_t>(is);
  if (nd < 1 || nd > 3) throw NumericError("grid binary: bad dimension");
  GridField field;
  for (uint32_t a = 0; a < nd; ++a) {
    AxisSpec ax;
    ax.lo = read_pod<double>(is);
    ax.hi = read_pod<double>(is);
    ax.count = static_cast<int>(read_pod<uint64_t>(is));
    field.axes.push_back(ax);
  }
  field.connectivity = read_pod<uint32_t>(is) == 0u
                           ? Connectivity::kFaceNeighbors
                           : Connectivity::kFullNeighbors;
  field.values.resize(field.node_count());
  for (double& v : field.values) v = read_pod<double>(is);
  return field;
}

}  // namespace flowscape
