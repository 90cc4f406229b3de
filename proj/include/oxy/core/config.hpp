#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "oxy/core/runtime.hpp"

namespace oxy {

/// Declarative MAS description:
///   {"entrypoint": name, "nodes": [OxySpec...], "model_bindings": [...],
///    "settings": {"max_call_depth": n, "planning_mode": "react"|"fixed_flow"}}
struct MasConfig {
  std::optional<std::string> entrypoint;
  std::vector<OxySpec> nodes;
  std::vector<ModelBinding> bindings;
  RuntimeSettings settings;
};

/// Throws ConfigError.
MasConfig config_from_json(const Json& j, const std::string& base_dir = ".");
MasConfig load_config(const std::filesystem::path& path);

/// Registers bindings then nodes, and installs settings.
void apply_config(Runtime& runtime, const MasConfig& config);

}  // namespace oxy
