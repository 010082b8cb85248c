#include "flowscape/registry.hpp"

#include <functional>
#include <map>

#include "flowscape/models.hpp"
#include "flowscape/rng.hpp"

namespace flowscape {

namespace {

using nlohmann::json;

Matrix matrix_from_json(const json& rows) {
  if (!rows.is_array() || rows.empty() || !rows[0].is_array()) {
    throw ConfigError("expected a matrix as an array of row arrays");
  }
  const int nr = static_cast<int>(rows.size());
  const int nc = static_cast<int>(rows[0].size());
  Matrix m(nr, nc);
  for (int i = 0; i < nr; ++i) {
    if (static_cast<int>(rows[i].size()) != nc) {
      throw ConfigError("ragged matrix rows in parameters");
    }
    for (int j = 0; j < nc; ++j) m(i, j) = rows[i][j].get<double>();
  }
  return m;
}

template <typename T>
T get_or(const json& params, const char* key, T fallback) {
  if (!params.contains(key)) return fallback;
  return params.at(key).get<T>();
}

// Default 3x3 input data with a zero third column (rank 2), and targets
// produced by a fixed planted network so the loss can reach zero.
Matrix default_nn_x() {
  Matrix x(3, 3);
  x << 1.0, 0.5, 0.0,
       0.0, 1.0, 0.0,
       0.3, -0.2, 0.0;
  return x;
}

ModelPtr make_linear_nn(const json& params) {
  std::vector<int> dims =
      get_or<std::vector<int>>(params, "dims", {3, 3, 2});
  if (dims.size() < 2) throw ConfigError("linear-nn: dims needs >= 2 entries");
  Matrix x, y;
  if (params.contains("x_data")) {
    x = matrix_from_json(params.at("x_data"));
  } else if (dims == std::vector<int>{3, 3, 2}) {
    x = default_nn_x();
  } else {
    // Seeded Gaussian data for other architectures.
    CounterRng rng(mix64(get_or<uint64_t>(params, "data_seed", 1)));
    const int cols = get_or<int>(params, "data_cols", dims.front());
    x.resize(dims.front(), cols);
    for (int j = 0; j < x.cols(); ++j)
      for (int i = 0; i < x.rows(); ++i) x(i, j) = rng.normal();
  }
  std::optional<double> inf0;
  if (params.contains("y_data")) {
    y = matrix_from_json(params.at("y_data"));
  } else {
    // Push the data through a fixed planted network: the infimum is 0.
    CounterRng rng(mix64(get_or<uint64_t>(params, "data_seed", 1) ^
                         0x9E3779B9ULL));
    Matrix p = x;
    for (size_t i = 1; i < dims.size(); ++i) {
      Matrix w(dims[i], dims[i - 1]);
      for (int c = 0; c < w.cols(); ++c)
        for (int r = 0; r < w.rows(); ++r) w(r, c) = rng.normal() * 0.6;
      p = w * p;
    }
    y = p;
    inf0 = 0.0;
  }
  return std::make_shared<LinearNet>(dims, std::move(x), std::move(y), inf0);
}

ModelPtr make_sensing(const json& params) {
  const uint64_t seed = get_or<uint64_t>(params, "seed", 0);
  const int m = get_or<int>(params, "m", 20);
  const int n1 = get_or<int>(params, "n1", 3);
  const int n2 = get_or<int>(params, "n2", 3);
  const int r = get_or<int>(params, "r", 1);
  const int probes = get_or<int>(params, "probe_samples", 1000);
  return std::make_shared<MatrixSensing>(
      build_sensing_ensemble(seed, m, n1, n2, r, probes), n1, n2, r);
}

ModelPtr make_l1_factorization(const json& params) {
  const int r = get_or<int>(params, "r", 1);
  Matrix m;
  if (params.contains("M")) {
    m = matrix_from_json(params.at("M"));
  } else {
    // Documented rank-1 default with all entries nonzero.
    Vector u(3), v(3);
    u << 1.0, 0.7, 1.3;
    v << 0.9, 1.2, 0.6;
    m = u * v.transpose();
  }
  return std::make_shared<L1Factorization>(std::move(m), r);
}

using Factory = std::function<ModelPtr(const json&)>;

const std::map<std::string, Factory>& factories() {
  static const std::map<std::string, Factory> table = {
      {"matrix-completion-ex1",
       [](const json&) { return std::make_shared<MatrixCompletionEx1>(); }},
      {"quadratic-bowl",
       [](const json& p) {
         return std::make_shared<QuadraticBowl>(get_or<int>(p, "dim", 2));
       }},
      {"l1-norm",
       [](const json& p) {
         return std::make_shared<L1NormModel>(get_or<int>(p, "dim", 1));
       }},
      {"constant-zero",
       [](const json& p) {
         return std::make_shared<ConstantModel>(get_or<int>(p, "dim", 1), 0.0);
       }},
      {"relu-toy", [](const json&) { return std::make_shared<ReluToy>(); }},
      {"sigmoid-two-data",
       [](const json& p) {
         return std::make_shared<SigmoidTwoData>(get_or<double>(p, "y1", 1.0),
                                                 get_or<double>(p, "y2", -1.0));
       }},
      {"sigmoid-two-data-asym",
       [](const json& p) {
         return std::make_shared<SigmoidTwoData>(get_or<double>(p, "y1", 1.0),
                                                 get_or<double>(p, "y2", -3.0));
       }},
      {"sigmoid-chain",
       [](const json& p) {
         return std::make_shared<SigmoidChain>(get_or<int>(p, "layers", 3),
                                               get_or<double>(p, "x", 1.0),
                                               get_or<double>(p, "y", 0.8));
       }},
      {"linear-nn", make_linear_nn},
      {"matrix-sensing", make_sensing},
      {"l1-factorization", make_l1_factorization},
      {"cex-unbounded",
       [](const json&) { return std::make_shared<CexUnbounded>(); }},
      {"cex-infinite-critical",
       [](const json&) { return std::make_shared<CexInfiniteCritical>(); }},
      {"oscillatory",
       [](const json&) { return std::make_shared<Oscillatory>(); }},
  };
  return table;
}

}  // namespace

ModelPtr make_model(const std::string& name, const nlohmann::json& params) {
  auto it = factories().find(name);
  if (it == factories().end()) {
    throw ConfigError("unknown model '" + name + "'");
  }
  try {
    return it->second(params.is_null() ? json::object() : params);
  } catch (const json::exception& e) {
    throw ConfigError("bad parameters for model '" + name + "': " + e.what());
  }
}

ModelPtr make_model(const std::string& name) {
  return make_model(name, nlohmann::json::object());
}

std::vector<std::string> registered_models() {
  std::vector<std::string> names;
  names.reserve(factories().size());
  for (const auto& [name, _] : factories()) names.push_back(name);
  return names;
}

}  // namespace flowscape
