#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "oxy/json.hpp"

namespace oxy {

class ScopeStore;

/// Caller name used for calls entering the runtime from outside.
inline constexpr std::string_view kUserCaller = "__user__";

enum class NodeKind { Agent, Tool, Llm, Flow };

enum class LifecycleStage { PreProcess, PreSaveData, Execute, PostProcess, FormatOutput };

inline constexpr std::array<LifecycleStage, 5> kAllStages = {
    LifecycleStage::PreProcess, LifecycleStage::PreSaveData, LifecycleStage::Execute,
    LifecycleStage::PostProcess, LifecycleStage::FormatOutput};

enum class Phase { Before, After };

enum class Status { Ok, Error };

std::string_view to_string(NodeKind kind) noexcept;
std::string_view to_string(LifecycleStage stage) noexcept;
std::string_view to_string(Phase phase) noexcept;
std::string_view to_string(Status status) noexcept;

std::optional<NodeKind> parse_node_kind(std::string_view text) noexcept;
std::optional<LifecycleStage> parse_stage(std::string_view text) noexcept;
std::optional<Phase> parse_phase(std::string_view text) noexcept;

/// A registered atomic component. Config keys by kind:
///   Agent: llm, system_prompt, max_react_rounds, retry_limit, fail_streak_limit, fixed_plan
///   Tool:  handler, params
///   Llm:   binding
///   Flow:  plan  ([{callee, arguments}]; "$input", "$prev", "$input.key", "$prev.key" substitute)
struct OxySpec {
  std::string name;
  NodeKind kind = NodeKind::Tool;
  std::string description;
  std::vector<std::string> permitted_callees;
  Json config = Json::object();

  bool operator==(const OxySpec&) const = default;
};

Json to_json(const OxySpec& spec);
OxySpec spec_from_json(const Json& j);

/// Per-call overrides applied by regeneration or breakpoint resume.
struct CallOverrides {
  std::optional<Json> arguments;
  std::optional<std::string> system_prompt;
  std::optional<std::string> model_binding;

  bool empty() const { return !arguments && !system_prompt && !model_binding; }
};

CallOverrides overrides_from_json(const Json& j);
Json to_json(const CallOverrides& o);

struct ReplayPlan;
struct CallFrame;

/// The call envelope traversing the lifecycle.
struct OxyRequest {
  std::string request_id;  // one per root run; keys the Request scope
  std::string call_id;
  std::optional<std::string> parent_call_id;
  std::string caller{kUserCaller};
  std::string callee;
  Json arguments = Json::object();
  std::optional<std::string> group_id;
  std::vector<std::string> call_chain;
  ScopeStore* scopes = nullptr;

  std::string trace_id;
  std::string version_id;
  // Model binding override inherited by an agent's own llm calls.
  std::optional<std::string> binding_override;
  std::shared_ptr<ReplayPlan> replay;
  std::shared_ptr<CallFrame> frame;

  // Scope accessors.
  std::optional<Json> global_data(std::string_view key) const;
  void set_global_data(std::string_view key, Json value);
  std::optional<Json> group_data(std::string_view key) const;
  void set_group_data(std::string_view key, Json value);
  std::optional<Json> shared_data(std::string_view key) const;
  void set_shared_data(std::string_view key, Json value);
  const Json& get_arguments() const { return arguments; }
  void set_arguments(std::string_view key, Json value);
};

struct OxyResponse {
  Status status = Status::Ok;
  Json output;
  std::optional<std::string> error_detail;
  std::map<std::string, double> timing;  // stage name -> ms

  bool ok() const { return status == Status::Ok; }

  static OxyResponse success(Json output);
  static OxyResponse failure(std::string detail, Json output = nullptr);
};

Json to_json(const OxyResponse& r);

}  // namespace oxy
