#include "flowscape/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "flowscape/common.hpp"

namespace flowscape {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

void write_trajectory_csv(const TrajectoryRecord& record, std::ostream& os) {
  const int d = record.states.empty() ? 0
                                      : static_cast<int>(record.states[0].size());
  os << "t";
  for (int i = 0; i < d; ++i) os << ",x_" << i;
  os << ",f,grad_norm,step_norm\n";
  for (size_t k = 0; k < record.size(); ++k) {
    os << format_double(record.times[k]);
    for (int i = 0; i < d; ++i) os << "," << format_double(record.states[k][i]);
    os << "," << format_double(record.values[k]) << ","
       << format_double(record.grad_norms[k]) << ","
       << format_double(record.step_norms[k]) << "\n";
  }
}

void write_value_curve_csv(const TrajectoryRecord& record, std::ostream& os,
                           const std::string& time_header) {
  os << csv_escape(time_header) << ",f\n";
  for (size_t k = 0; k < record.size(); ++k) {
    os << format_double(record.times[k]) << ","
       << format_double(record.values[k]) << "\n";
  }
}

nlohmann::ordered_json trajectory_to_json(const TrajectoryRecord& record) {
  nlohmann::ordered_json j;
  j["method"] = to_string(record.method);
  j["terminated_by"] = to_string(record.terminated_by);
  j["times"] = record.times;
  std::vector<std::vector<double>> states;
  states.reserve(record.states.size());
  for (const Vector& s : record.states) {
    states.emplace_back(s.data(), s.data() + s.size());
  }
  j["states"] = states;
  j["values"] = record.values;
  j["grad_norms"] = record.grad_norms;
  j["step_norms"] = record.step_norms;
  return j;
}

void write_text_file(const std::string& path, const std::string& contents) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream os(p, std::ios::binary);
  if (!os) throw ConfigError("cannot open '" + path + "' for writing");
  os << contents;
  if (!os) throw ConfigError("write failed for '" + path + "'");
}

}  // namespace flowscape
