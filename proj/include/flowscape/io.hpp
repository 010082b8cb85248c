#pragma once

#include <json.hpp>

#include <iosfwd>
#include <string>

#include "flowscape/flows.hpp"

namespace flowscape {

// Shortest-roundtrip-ish decimal form used in all CSV output ("%.17g").
std::string format_double(double v);

// RFC-4180 quoting: fields containing commas, quotes or newlines are quoted,
// with embedded quotes doubled.
std::string csv_escape(const std::string& field);

// Header: t,x_0..x_{d-1},f,grad_norm,step_norm.
void write_trajectory_csv(const TrajectoryRecord& record, std::ostream& os);

// Slim two-column form (t, f); used by the per-trial experiment exports.
void write_value_curve_csv(const TrajectoryRecord& record, std::ostream& os,
                           const std::string& time_header = "t");

nlohmann::ordered_json trajectory_to_json(const TrajectoryRecord& record);

// Opens for writing, creating parent directories; throws ConfigError with
// the path on failure.
void write_text_file(const std::string& path, const std::string& contents);

}  // namespace flowscape
