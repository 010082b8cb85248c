#include <cctype>
#include <fstream>
#include <sstream>

#include "flowscape/harness.hpp"

namespace flowscape {

namespace {

using nlohmann::json;

std::string strip(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// Removes a trailing comment that is not inside a string literal.
std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_str = !in_str;
    if (line[i] == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

class ValueParser {
 public:
  explicit ValueParser(const std::string& text) : s_(text) {}

  json parse() {
    json v = parse_value();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters after value");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& why) {
    throw ConfigError("config value '" + s_ + "': " + why);
  }
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_])))
      ++pos_;
  }
  json parse_value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("empty value");
    const char c = s_[pos_];
    if (c == '[') return parse_array();
    if (c == '"') return parse_string();
    return parse_scalar();
  }
  json parse_array() {
    ++pos_;  // '['
    json arr = json::array();
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return arr;
    }
    while (true) {
      arr.push_back(parse_value());
      skip_ws();
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ',') {
        ++pos_;
        continue;
      }
      if (s_[pos_] == ']') {
        ++pos_;
        return arr;
      }
      fail("expected ',' or ']' in array");
    }
  }
  json parse_string() {
    ++pos_;  // '"'
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) {
        ++pos_;
        switch (s_[pos_]) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          default: out += s_[pos_];
        }
      } else {
        out += s_[pos_];
      }
      ++pos_;
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;  // closing quote
    return json(out);
  }
  json parse_scalar() {
    size_t end = pos_;
    while (end < s_.size() && s_[end] != ',' && s_[end] != ']') ++end;
    std::string tok = strip(s_.substr(pos_, end - pos_));
    pos_ = end;
    if (tok == "true") return json(true);
    if (tok == "false") return json(false);
    try {
      size_t used = 0;
      if (tok.find_first_of(".eEnN") == std::string::npos) {
        long long i = std::stoll(tok, &used);
        if (used == tok.size()) return json(i);
      }
      double d = std::stod(tok, &used);
      if (used == tok.size()) return json(d);
    } catch (...) {
    }
    fail("cannot parse scalar '" + tok + "'");
  }

  std::string s_;
  size_t pos_ = 0;
};

}  // namespace

nlohmann::json parse_toml_lite(const std::string& text) {
  json root = json::object();
  json* current = &root;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = strip(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": malformed section header");
      }
      std::string name = strip(line.substr(1, line.size() - 2));
      if (name.empty()) {
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": empty section name");
      }
      current = &root[name];
      if (current->is_null()) *current = json::object();
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    }
    const std::string key = strip(line.substr(0, eq));
    std::string value = strip(line.substr(eq + 1));
    // Multi-line arrays: accumulate until brackets balance.
    auto balance = [](const std::string& s) {
      int b = 0;
      bool in_str = false;
      for (char c : s) {
        if (c == '"') in_str = !in_str;
        if (in_str) continue;
        if (c == '[') ++b;
        if (c == ']') --b;
      }
      return b;
    };
    while (balance(value) > 0 && std::getline(is, line)) {
      ++lineno;
      value += " " + strip(strip_comment(line));
    }
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": empty key");
    }
    (*current)[key] = ValueParser(value).parse();
  }
  return root;
}

namespace {

Vector vector_from_json(const json& arr) {
  if (!arr.is_array()) throw ConfigError("expected an array of numbers");
  Vector v(arr.size());
  for (size_t i = 0; i < arr.size(); ++i) v[i] = arr[i].get<double>();
  return v;
}

json vector_to_json(const Vector& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Method method_from_string(const std::string& s) {
  if (s == "euler") return Method::kEuler;
  if (s == "flow") return Method::kFlow;
  if (s == "prox") return Method::kProx;
  throw ConfigError("unknown method '" + s + "' (euler | flow | prox)");
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (!j.contains("model")) throw ConfigError("config: 'model' is required");
    c.model = j.at("model").get<std::string>();
    if (j.contains("model_params")) c.model_params = j.at("model_params");
    if (j.contains("method"))
      c.method = method_from_string(j.at("method").get<std::string>());
    if (j.contains("trials")) c.trials = j.at("trials").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    if (j.contains("record_stride"))
      c.record_stride = j.at("record_stride").get<int>();
    if (j.contains("euler")) {
      const auto& e = j.at("euler");
      if (e.contains("step")) c.euler.step = e.at("step").get<double>();
      if (e.contains("max_iters"))
        c.euler.max_iters = e.at("max_iters").get<int>();
    }
    if (j.contains("flow")) {
      const auto& f = j.at("flow");
      if (f.contains("t_end")) c.flow.t_end = f.at("t_end").get<double>();
      if (f.contains("rel_tol")) c.flow.rel_tol = f.at("rel_tol").get<double>();
      if (f.contains("abs_tol")) c.flow.abs_tol = f.at("abs_tol").get<double>();
    }
    if (j.contains("prox")) {
      const auto& p = j.at("prox");
      if (p.contains("tau")) c.prox.tau = p.at("tau").get<double>();
      if (p.contains("outer_steps"))
        c.prox.outer_steps = p.at("outer_steps").get<int>();
      if (p.contains("inner_tol"))
        c.prox.inner_tol = p.at("inner_tol").get<double>();
      if (p.contains("inner_max_iters"))
        c.prox.inner_max_iters = p.at("inner_max_iters").get<int>();
    }
    if (j.contains("init")) {
      const auto& i = j.at("init");
      const std::string kind = i.value("kind", std::string("uniform"));
      if (kind == "uniform") {
        c.init.kind = InitSpec::Kind::kUniform;
        if (i.contains("lo")) c.init.lo = vector_from_json(i.at("lo"));
        if (i.contains("hi")) c.init.hi = vector_from_json(i.at("hi"));
      } else if (kind == "points") {
        c.init.kind = InitSpec::Kind::kPoints;
        if (!i.contains("points")) {
          throw ConfigError("config: init.points is required for kind=points");
        }
        for (const auto& p : i.at("points")) {
          c.init.points.push_back(vector_from_json(p));
        }
      } else {
        throw ConfigError("config: unknown init kind '" + kind + "'");
      }
    }
    if (j.contains("stuck_rule")) {
      const auto& s = j.at("stuck_rule");
      if (s.contains("center")) c.stuck.center = s.at("center").get<double>();
      if (s.contains("half_width"))
        c.stuck.half_width = s.at("half_width").get<double>();
      if (s.contains("min_plateau_iters"))
        c.stuck.min_plateau_iters = s.at("min_plateau_iters").get<int>();
      if (s.contains("grad_tol"))
        c.stuck.grad_tol = s.at("grad_tol").get<double>();
    }
    if (j.contains("guards")) {
      const auto& g = j.at("guards");
      if (g.contains("critical_tol"))
        c.guards.critical_tol = g.at("critical_tol").get<double>();
      if (g.contains("divergence_guard"))
        c.guards.divergence_guard = g.at("divergence_guard").get<double>();
    }
    if (j.contains("outputs")) {
      const auto& o = j.at("outputs");
      if (o.contains("manifest"))
        c.manifest_name = o.at("manifest").get<std::string>();
      if (o.contains("trial_csv")) c.trial_csv = o.at("trial_csv").get<bool>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.trials < 1) throw ConfigError("config: trials must be >= 1");
  if (c.stuck.half_width <= 0.0) {
    throw ConfigError("config: stuck_rule.half_width must be > 0");
  }
  return c;
}

nlohmann::ordered_json ExperimentConfig::to_json() const {
  nlohmann::ordered_json j;
  j["model"] = model;
  j["model_params"] = model_params;
  j["method"] = to_string(method);
  j["trials"] = trials;
  j["seed"] = seed;
  j["record_stride"] = record_stride;
  j["euler"] = {{"step", euler.step}, {"max_iters", euler.max_iters}};
  j["flow"] = {{"t_end", flow.t_end},
               {"rel_tol", flow.rel_tol},
               {"abs_tol", flow.abs_tol}};
  j["prox"] = {{"tau", prox.tau},
               {"outer_steps", prox.outer_steps},
               {"inner_tol", prox.inner_tol},
               {"inner_max_iters", prox.inner_max_iters}};
  if (init.kind == InitSpec::Kind::kUniform) {
    j["init"] = {{"kind", "uniform"},
                 {"lo", vector_to_json(init.lo)},
                 {"hi", vector_to_json(init.hi)}};
  } else {
    std::vector<nlohmann::json> pts;
    for (const Vector& p : init.points) pts.push_back(vector_to_json(p));
    j["init"] = {{"kind", "points"}, {"points", pts}};
  }
  j["stuck_rule"] = {{"center", stuck.center},
                     {"half_width", stuck.half_width},
                     {"min_plateau_iters", stuck.min_plateau_iters},
                     {"grad_tol", stuck.grad_tol}};
  j["guards"] = {{"critical_tol", guards.critical_tol},
                 {"divergence_guard", guards.divergence_guard}};
  j["outputs"] = {{"manifest", manifest_name}, {"trial_csv", trial_csv}};
  return j;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << is.rdbuf();
  const std::string text = buf.str();
  nlohmann::json j;
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config '" + path + "': " + e.what());
    }
  } else {
    j = parse_toml_lite(text);
  }
  return ExperimentConfig::from_json(j);
}

}  // namespace flowscape
