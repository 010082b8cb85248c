#pragma once

#include <json.hpp>

#include <string>
#include <vector>

#include "flowscape/model.hpp"

namespace flowscape {

// Builds a zoo model by registry name. Unknown names and malformed parameter
// tables throw ConfigError. All models come with deterministic documented
// defaults so `make_model(name)` always works.
ModelPtr make_model(const std::string& name, const nlohmann::json& params);
ModelPtr make_model(const std::string& name);

std::vector<std::string> registered_models();

}  // namespace flowscape
