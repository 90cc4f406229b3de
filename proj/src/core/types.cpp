#include "oxy/core/types.hpp"

#include "oxy/error.hpp"
#include "oxy/scopes/scope_store.hpp"

namespace oxy {

std::string_view to_string(NodeKind kind) noexcept {
  switch (kind) {
    case NodeKind::Agent: return "agent";
    case NodeKind::Tool: return "tool";
    case NodeKind::Llm: return "llm";
    case NodeKind::Flow: return "flow";
  }
  return "?";
}

std::string_view to_string(LifecycleStage stage) noexcept {
  switch (stage) {
    case LifecycleStage::PreProcess: return "PreProcess";
    case LifecycleStage::PreSaveData: return "PreSaveData";
    case LifecycleStage::Execute: return "Execute";
    case LifecycleStage::PostProcess: return "PostProcess";
    case LifecycleStage::FormatOutput: return "FormatOutput";
  }
  return "?";
}

std::string_view to_string(Phase phase) noexcept {
  return phase == Phase::Before ? "Before" : "After";
}

std::string_view to_string(Status status) noexcept {
  return status == Status::Ok ? "Ok" : "Error";
}

std::optional<NodeKind> parse_node_kind(std::string_view text) noexcept {
  if (text == "agent" || text == "Agent") return NodeKind::Agent;
  if (text == "tool" || text == "Tool") return NodeKind::Tool;
  if (text == "llm" || text == "Llm") return NodeKind::Llm;
  if (text == "flow" || text == "Flow") return NodeKind::Flow;
  return std::nullopt;
}

std::optional<LifecycleStage> parse_stage(std::string_view text) noexcept {
  for (auto stage : kAllStages)
    if (to_string(stage) == text) return stage;
  return std::nullopt;
}

std::optional<Phase> parse_phase(std::string_view text) noexcept {
  if (text == "Before") return Phase::Before;
  if (text == "After") return Phase::After;
  return std::nullopt;
}

Json to_json(const OxySpec& spec) {
  return Json{{"name", spec.name},
              {"kind", to_string(spec.kind)},
              {"description", spec.description},
              {"permitted_callees", spec.permitted_callees},
              {"config", spec.config}};
}

OxySpec spec_from_json(const Json& j) {
  if (!j.is_object()) throw Error(Errc::InvalidSpec, "node spec must be an object");
  OxySpec spec;
  spec.name = j.value("name", "");
  const auto kind = parse_node_kind(j.value("kind", ""));
  if (!kind) throw Error(Errc::InvalidSpec, "node '" + spec.name + "' has an unknown kind");
  spec.kind = *kind;
  spec.description = j.value("description", "");
  if (auto it = j.find("permitted_callees"); it != j.end()) {
    if (!it->is_array()) throw Error(Errc::InvalidSpec, "permitted_callees must be a list");
    for (const auto& callee : *it) spec.permitted_callees.push_back(callee.get<std::string>());
  }
  spec.config = j.value("config", Json::object());
  return spec;
}

CallOverrides overrides_from_json(const Json& j) {
  CallOverrides o;
  if (j.is_null()) return o;
  if (!j.is_object()) throw Error(Errc::OverrideInvalid, "overrides must be an object");
  if (auto it = j.find("arguments"); it != j.end()) {
    if (!it->is_object()) throw Error(Errc::OverrideInvalid, "arguments override must be an object");
    o.arguments = *it;
  }
  if (auto it = j.find("system_prompt"); it != j.end()) o.system_prompt = it->get<std::string>();
  if (auto it = j.find("model_binding"); it != j.end()) o.model_binding = it->get<std::string>();
  return o;
}

Json to_json(const CallOverrides& o) {
  Json j = Json::object();
  if (o.arguments) j["arguments"] = *o.arguments;
  if (o.system_prompt) j["system_prompt"] = *o.system_prompt;
  if (o.model_binding) j["model_binding"] = *o.model_binding;
  return j;
}

namespace {
ScopeStore& require_store(ScopeStore* store) {
  if (store == nullptr) throw Error(Errc::InvalidArgument, "request has no scope store");
  return *store;
}
}  // namespace

std::optional<Json> OxyRequest::global_data(std::string_view key) const {
  return require_store(scopes).get(*this, ScopeLevel::Application, key);
}
void OxyRequest::set_global_data(std::string_view key, Json value) {
  require_store(scopes).set(*this, ScopeLevel::Application, key, std::move(value));
}
std::optional<Json> OxyRequest::group_data(std::string_view key) const {
  return require_store(scopes).get(*this, ScopeLevel::SessionGroup, key);
}
void OxyRequest::set_group_data(std::string_view key, Json value) {
  require_store(scopes).set(*this, ScopeLevel::SessionGroup, key, std::move(value));
}
std::optional<Json> OxyRequest::shared_data(std::string_view key) const {
  return require_store(scopes).get(*this, ScopeLevel::Request, key);
}
void OxyRequest::set_shared_data(std::string_view key, Json value) {
  require_store(scopes).set(*this, ScopeLevel::Request, key, std::move(value));
}
void OxyRequest::set_arguments(std::string_view key, Json value) {
  if (!arguments.is_object()) arguments = Json::object();
  arguments[std::string(key)] = std::move(value);
}

OxyResponse OxyResponse::success(Json output) {
  OxyResponse r;
  r.output = std::move(output);
  return r;
}

OxyResponse OxyResponse::failure(std::string detail, Json output) {
  OxyResponse r;
  r.status = Status::Error;
  r.error_detail = detail.empty() ? std::string("error") : std::move(detail);
  r.output = std::move(output);
  return r;
}

Json to_json(const OxyResponse& r) {
  Json j{{"status", to_string(r.status)}, {"output", r.output}, {"timing", r.timing}};
  if (r.error_detail) j["error"] = *r.error_detail;
  return j;
}

}  // namespace oxy
