#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>

#include "oxy/core/aspect.hpp"
#include "oxy/core/breakpoints.hpp"
#include "oxy/core/registry.hpp"
#include "oxy/core/types.hpp"
#include "oxy/model/model.hpp"
#include "oxy/scopes/scope_store.hpp"
#include "oxy/tracer/graph.hpp"
#include "oxy/tracer/trace_store.hpp"

namespace oxy {

class Runtime;

enum class PlanningMode { React, FixedFlow };

struct RuntimeSettings {
  std::size_t max_call_depth = 32;
  PlanningMode planning_mode = PlanningMode::React;
  std::optional<std::string> entrypoint;
};

struct ToolContext {
  OxyRequest& request;
  const Json& params;
  Runtime& runtime;
};

/// In-process tool implementation. Throwing marks the call as failed.
using ToolHandler = std::function<Json(ToolContext&)>;

/// Per-call bookkeeping shared by a call and the children it spawns.
struct CallFrame {
  std::shared_ptr<CallFrame> parent;
  std::string call_id;
  std::atomic<int> next_child{0};
  int ordinal = 0;
  bool replay_root = false;
  bool suppress_events = false;
  std::optional<std::string> original_call_id;  // set while replaying a regeneration
};

/// Regeneration state: which original calls are reused, resumed, or re-run.
struct ReplayPlan {
  ExecutionGraph original;
  std::string target_call_id;
  std::uint64_t target_first_seq = 0;
  std::set<std::string> ancestors;
  CallOverrides overrides;
  // (original parent call_id, child ordinal) -> original child call_id; the
  // root is keyed by ("", 0).
  std::map<std::pair<std::string, int>, std::string> child_index;
  std::string new_target_call_id;
};

struct RunOptions {
  std::string callee;
  Json arguments = Json::object();
  std::optional<std::string> group_id;
  std::string caller{kUserCaller};
};

struct RunResult {
  std::string trace_id;
  std::string version_id;
  OxyResponse response;
};

/// Registry, scopes, aspects, models and tracer wired into the five-stage
/// call lifecycle.
class Runtime {
 public:
  explicit Runtime(std::shared_ptr<TraceStore> traces = std::make_shared<TraceStore>());

  Registry& registry() { return registry_; }
  const Registry& registry() const { return registry_; }
  ScopeStore& scopes() { return scopes_; }
  AspectRegistry& aspects() { return aspects_; }
  ModelAdapter& models() { return models_; }
  const ModelAdapter& models() const { return models_; }
  Breakpoints& breakpoints() { return breakpoints_; }
  TraceStore& traces() { return *traces_; }
  std::shared_ptr<TraceStore> trace_store() const { return traces_; }

  RuntimeSettings settings() const;
  void set_settings(RuntimeSettings settings);

  void register_node(OxySpec spec) { registry_.register_node(std::move(spec)); }
  void register_tool_handler(std::string name, ToolHandler handler);
  bool has_tool_handler(std::string_view name) const;

  /// Opens a trace, runs one root call, seals the trace.
  RunResult run(const RunOptions& options);

  /// Runs the lifecycle for one call. Never throws for call failures.
  OxyResponse call(OxyRequest request);

  /// Child request envelope: fresh arguments, extended call chain.
  OxyRequest make_child(const OxyRequest& parent, std::string callee, Json arguments) const;

  /// Re-executes `call_id` and everything downstream of it under overrides
  /// as a new version. Throws UnknownTrace, UnsealedTrace, UnknownCall,
  /// OverrideInvalid.
  std::string regenerate(const std::string& trace_id, const std::string& version_id,
                         const std::string& call_id, const CallOverrides& overrides);

 private:
  struct StageOutcome;
  OxyResponse call_impl(OxyRequest& request);
  OxyResponse execute(OxyRequest& request, const OxySpec& spec);
  OxyResponse execute_tool(OxyRequest& request, const OxySpec& spec);
  OxyResponse execute_llm(OxyRequest& request, const OxySpec& spec);
  OxyResponse execute_flow(OxyRequest& request, const OxySpec& spec, const Json& plan);
  void emit(const OxyRequest& request, NodeKind kind, LifecycleStage stage, Phase phase,
            Json payload, bool record);

  std::shared_ptr<TraceStore> traces_;
  Registry registry_;
  ScopeStore scopes_;
  AspectRegistry aspects_;
  ModelAdapter models_;
  Breakpoints breakpoints_;

  mutable std::mutex settings_mutex_;
  RuntimeSettings settings_;

  mutable std::mutex tools_mutex_;
  std::unordered_map<std::string, ToolHandler> tools_;
};

}  // namespace oxy
