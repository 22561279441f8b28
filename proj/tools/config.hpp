#pragma once

#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "uavisac/scenario.hpp"

namespace uavisac::cli {

/// A scenario plus the policy selection ("optimized", "parallel", "diagonal" or "all").
struct RunSettings {
  ScenarioConfig scenario;
  std::string policy = "all";
};

/// Parses a YAML document; unknown keys and bad values raise Error(Config)
/// with "<source>:<line>:<col>" in the message. Missing keys keep defaults.
RunSettings parse_settings(const std::string& text, const std::string& source = "<string>");

/// Reads and parses a file; a missing file is a Config error naming the path.
RunSettings load_settings(const std::string& path);

/// Full echo of the settings in the same schema parse_settings accepts.
YAML::Node to_yaml(const RunSettings& s);
std::string to_yaml_string(const RunSettings& s);

std::vector<Policy> selected_policies(const std::string& policy);

}  // namespace uavisac::cli
