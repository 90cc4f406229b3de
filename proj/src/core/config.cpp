#include "oxy/core/config.hpp"

#include <fstream>

#include "oxy/error.hpp"

namespace oxy {
namespace {

// Tool params naming files are relative to the config file.
OxySpec resolve_paths(OxySpec spec, const std::string& base_dir) {
  if (spec.kind != NodeKind::Tool || !spec.config.contains("params")) return spec;
  auto& params = spec.config["params"];
  for (const char* key : {"path", "root"}) {
    if (!params.contains(key) || !params[key].is_string()) continue;
    const std::filesystem::path p = params[key].get<std::string>();
    if (p.is_relative()) params[key] = (std::filesystem::path(base_dir) / p).lexically_normal().string();
  }
  return spec;
}

}  // namespace

MasConfig config_from_json(const Json& j, const std::string& base_dir) {
  if (!j.is_object()) throw Error(Errc::ConfigError, "config must be an object");
  MasConfig config;
  try {
    if (j.contains("entrypoint") && !j["entrypoint"].is_null())
      config.entrypoint = j["entrypoint"].get<std::string>();
    for (const auto& node : j.value("nodes", Json::array()))
      config.nodes.push_back(resolve_paths(spec_from_json(node), base_dir));
    for (const auto& b : j.value("model_bindings", Json::array()))
      config.bindings.push_back(binding_from_json(b, base_dir));
    const auto settings = j.value("settings", Json::object());
    config.settings.max_call_depth = settings.value("max_call_depth", config.settings.max_call_depth);
    const auto mode = settings.value("planning_mode", std::string("react"));
    if (mode == "react") config.settings.planning_mode = PlanningMode::React;
    else if (mode == "fixed_flow") config.settings.planning_mode = PlanningMode::FixedFlow;
    else throw Error(Errc::ConfigError, "unknown planning_mode '" + mode + "'");
  } catch (const Json::exception& e) {
    throw Error(Errc::ConfigError, e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::ConfigError) throw;
    throw Error(Errc::ConfigError, e.what());
  }
  config.settings.entrypoint = config.entrypoint;
  return config;
}

MasConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigError, "cannot open " + path.string());
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::ConfigError, path.string() + " is not valid JSON");
  const auto base = path.has_parent_path() ? path.parent_path().string() : std::string(".");
  return config_from_json(j, base);
}

void apply_config(Runtime& runtime, const MasConfig& config) {
  for (const auto& binding : config.bindings) runtime.models().add(binding);
  for (const auto& node : config.nodes) runtime.register_node(node);
  runtime.set_settings(config.settings);
}

}  // namespace oxy
