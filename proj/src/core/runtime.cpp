#include "oxy/core/runtime.hpp"

#include <algorithm>
#include <chrono>

#include "oxy/error.hpp"
#include "oxy/ids.hpp"
#include "oxy/planner/planner.hpp"

namespace oxy {
namespace {

enum class CallMode { Live, Replayed, Resumed, Target, Shadow };

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since)
      .count();
}

Json substitute(const Json& value, const Json& input, const Json& prev) {
  if (value.is_string()) {
    const auto& text = value.get_ref<const std::string&>();
    for (const auto& [name, source] : {std::pair<std::string, const Json*>{"$input", &input},
                                       std::pair<std::string, const Json*>{"$prev", &prev}}) {
      if (text == name) return *source;
      if (text.starts_with(name + ".")) {
        const auto key = text.substr(name.size() + 1);
        return source->is_object() && source->contains(key) ? (*source)[key] : Json();
      }
    }
    return value;
  }
  if (value.is_object()) {
    Json out = Json::object();
    for (auto it = value.begin(); it != value.end(); ++it)
      out[it.key()] = substitute(it.value(), input, prev);
    return out;
  }
  if (value.is_array()) {
    Json out = Json::array();
    for (const auto& v : value) out.push_back(substitute(v, input, prev));
    return out;
  }
  return value;
}

void apply_overrides(OxyRequest& request, const CallOverrides& overrides,
                     std::optional<std::string>& system_prompt) {
  if (overrides.arguments) request.arguments.merge_patch(*overrides.arguments);
  if (overrides.model_binding) request.binding_override = overrides.model_binding;
  if (overrides.system_prompt) system_prompt = overrides.system_prompt;
}

}  // namespace

Runtime::Runtime(std::shared_ptr<TraceStore> traces) : traces_(std::move(traces)) {
  if (!traces_) traces_ = std::make_shared<TraceStore>();
}

RuntimeSettings Runtime::settings() const {
  std::lock_guard lock(settings_mutex_);
  return settings_;
}

void Runtime::set_settings(RuntimeSettings settings) {
  std::lock_guard lock(settings_mutex_);
  settings_ = std::move(settings);
}

void Runtime::register_tool_handler(std::string name, ToolHandler handler) {
  std::lock_guard lock(tools_mutex_);
  tools_[std::move(name)] = std::move(handler);
}

bool Runtime::has_tool_handler(std::string_view name) const {
  std::lock_guard lock(tools_mutex_);
  return tools_.contains(std::string(name));
}

OxyRequest Runtime::make_child(const OxyRequest& parent, std::string callee, Json arguments) const {
  OxyRequest child;
  child.request_id = parent.request_id;
  child.parent_call_id = parent.call_id;
  child.caller = parent.callee;
  child.callee = std::move(callee);
  child.arguments = std::move(arguments);
  child.group_id = parent.group_id;
  child.call_chain = parent.call_chain;
  child.call_chain.push_back(parent.callee);
  child.scopes = parent.scopes;
  child.trace_id = parent.trace_id;
  child.version_id = parent.version_id;
  child.replay = parent.replay;
  child.frame = std::make_shared<CallFrame>();
  child.frame->parent = parent.frame;
  return child;
}

RunResult Runtime::run(const RunOptions& options) {
  Json origin{{"kind", "run"}, {"root_caller", options.caller}};
  auto [trace_id, version_id] = traces_->open_trace(registry_.snapshot_json(), std::move(origin));
  OxyRequest request;
  request.request_id = trace_id;
  request.caller = options.caller;
  request.callee = options.callee;
  request.arguments = options.arguments;
  request.group_id = options.group_id;
  request.call_chain = {options.caller};
  request.scopes = &scopes_;
  request.trace_id = trace_id;
  request.version_id = version_id;
  request.frame = std::make_shared<CallFrame>();
  auto response = call(std::move(request));
  traces_->seal(trace_id, version_id);
  scopes_.drop_request(trace_id);
  return RunResult{trace_id, version_id, std::move(response)};
}

OxyResponse Runtime::call(OxyRequest request) {
  try {
    return call_impl(request);
  } catch (const std::exception& e) {
    return OxyResponse::failure(e.what());
  }
}

void Runtime::emit(const OxyRequest& request, NodeKind kind, LifecycleStage stage, Phase phase,
                   Json payload, bool record) {
  const Json* output = nullptr;
  if (stage == LifecycleStage::FormatOutput && phase == Phase::After && payload.contains("output"))
    output = &payload["output"];
  Json annotations = aspects_.fire(stage, phase, request, kind, output);
  if (!record || request.trace_id.empty()) return;
  if (!annotations.empty()) payload["annotations"] = std::move(annotations);
  TraceEvent event;
  event.trace_id = request.trace_id;
  event.version_id = request.version_id;
  event.call_id = request.call_id;
  event.parent_call_id = request.parent_call_id;
  event.node = request.callee;
  event.node_kind = kind;
  event.stage = stage;
  event.phase = phase;
  event.ts_ms = now_ms();
  event.payload = std::move(payload);
  traces_->record(std::move(event));
}

OxyResponse Runtime::call_impl(OxyRequest& request) {
  const auto spec_found = registry_.find(request.callee);
  if (!spec_found) return OxyResponse::failure("node not found: " + request.callee);
  const OxySpec& spec = *spec_found;
  if (request.call_chain.empty()) request.call_chain = {request.caller};
  const auto limits = settings();
  if (request.call_chain.size() > limits.max_call_depth)
    return OxyResponse::failure("max call depth " + std::to_string(limits.max_call_depth) +
                                " exceeded at " + request.callee);
  if (!request.scopes) request.scopes = &scopes_;
  if (request.request_id.empty()) request.request_id = new_id();
  if (!request.frame) request.frame = std::make_shared<CallFrame>();
  auto& frame = *request.frame;
  if (frame.parent) {
    frame.ordinal = frame.parent->next_child++;
    frame.suppress_events = frame.parent->suppress_events;
  }

  // Regeneration: decide whether this call is reused, resumed, or re-run.
  CallMode mode = frame.suppress_events ? CallMode::Shadow : CallMode::Live;
  const TraceNode* original = nullptr;
  if (request.replay && !frame.suppress_events) {
    std::optional<std::pair<std::string, int>> key;
    if (frame.replay_root)
      key = std::pair<std::string, int>{"", 0};
    else if (frame.parent && frame.parent->original_call_id)
      key = std::pair<std::string, int>{*frame.parent->original_call_id, frame.ordinal};
    if (key) {
      if (auto it = request.replay->child_index.find(*key); it != request.replay->child_index.end())
        original = request.replay->original.node(it->second);
    }
    if (original && original->name == request.callee) {
      const auto& plan = *request.replay;
      if (original->call_id == plan.target_call_id) {
        mode = CallMode::Target;
      } else if (plan.ancestors.contains(original->call_id)) {
        mode = CallMode::Resumed;
      } else if (original->last_seq < plan.target_first_seq &&
                 original->status != NodeStatus::Running) {
        mode = is_truncated_snapshot(original->output) ? CallMode::Shadow : CallMode::Replayed;
      }
    }
  }

  if (mode == CallMode::Replayed) {
    OxyResponse reused;
    reused.status = original->status == NodeStatus::Ok ? Status::Ok : Status::Error;
    reused.output = original->output;
    if (reused.status == Status::Error)
      reused.error_detail = original->error.value_or(std::string("error"));
    return reused;
  }

  std::optional<std::string> system_prompt;
  if (mode == CallMode::Resumed) {
    request.call_id = original->call_id;
    frame.original_call_id = original->call_id;
  } else {
    request.call_id = new_id();
  }
  if (mode == CallMode::Target) {
    request.replay->new_target_call_id = request.call_id;
    apply_overrides(request, request.replay->overrides, system_prompt);
  }
  if (mode == CallMode::Shadow) frame.suppress_events = true;
  frame.call_id = request.call_id;

  // Resumed calls inherit their events up to the start of Execute.
  const bool record_early = mode != CallMode::Resumed && mode != CallMode::Shadow;
  const bool record_late = mode != CallMode::Shadow;
  const NodeKind kind = spec.kind;
  OxyResponse response;

  auto pause = [&](LifecycleStage stage) {
    if (auto resumed = breakpoints_.pause_if_matched(request, stage))
      apply_overrides(request, *resumed, system_prompt);
  };
  auto timed = [&](LifecycleStage stage, auto&& body) {
    const auto start = std::chrono::steady_clock::now();
    body();
    response.timing[std::string(to_string(stage))] = elapsed_ms(start);
  };

  pause(LifecycleStage::PreProcess);
  emit(request, kind, LifecycleStage::PreProcess, Phase::Before, Json::object(), record_early);
  timed(LifecycleStage::PreProcess, [&] {
    if (request.arguments.is_null()) request.arguments = Json::object();
    if (!request.arguments.is_object()) request.arguments = Json{{"input", request.arguments}};
    request.arguments.erase("callee");
  });
  emit(request, kind, LifecycleStage::PreProcess, Phase::After, Json::object(), record_early);

  pause(LifecycleStage::PreSaveData);
  emit(request, kind, LifecycleStage::PreSaveData, Phase::Before, Json::object(), record_early);
  Json saved;
  timed(LifecycleStage::PreSaveData, [&] {
    saved = Json{{"input", snapshot_value(request.arguments)},
                 {"caller", request.caller},
                 {"call_chain", request.call_chain},
                 {"request_id", request.request_id},
                 {"group_id", request.group_id ? Json(*request.group_id) : Json()}};
  });
  emit(request, kind, LifecycleStage::PreSaveData, Phase::After, std::move(saved), record_early);

  pause(LifecycleStage::Execute);
  emit(request, kind, LifecycleStage::Execute, Phase::Before, Json::object(), record_early);
  Json execute_payload = Json::object();
  timed(LifecycleStage::Execute, [&] {
    try {
      if (kind == NodeKind::Agent) {
        OxySpec agent = spec;
        if (system_prompt) agent.config["system_prompt"] = *system_prompt;
        if (limits.planning_mode == PlanningMode::FixedFlow) {
          response = agent.config.contains("fixed_plan")
                         ? execute_flow(request, agent, agent.config["fixed_plan"])
                         : OxyResponse::failure("agent " + agent.name + " has no fixed_plan");
        } else {
          auto result = run_react(*this, agent, request);
          execute_payload["react"] = to_json(result);
          auto timing = std::move(response.timing);
          response = std::move(result.response);
          response.timing = std::move(timing);
        }
      } else {
        auto timing = std::move(response.timing);
        response = execute(request, spec);
        response.timing = std::move(timing);
      }
    } catch (const std::exception& e) {
      auto timing = std::move(response.timing);
      response = OxyResponse::failure(e.what());
      response.timing = std::move(timing);
    }
  });
  execute_payload["status"] = to_string(response.status);
  emit(request, kind, LifecycleStage::Execute, Phase::After, std::move(execute_payload),
       record_late);

  if (response.ok()) {
    pause(LifecycleStage::PostProcess);
    emit(request, kind, LifecycleStage::PostProcess, Phase::Before, Json::object(), record_late);
    timed(LifecycleStage::PostProcess, [] {});
    emit(request, kind, LifecycleStage::PostProcess, Phase::After, Json::object(), record_late);
  }

  pause(LifecycleStage::FormatOutput);
  emit(request, kind, LifecycleStage::FormatOutput, Phase::Before, Json::object(), record_late);
  timed(LifecycleStage::FormatOutput, [&] {
    if (!response.ok()) {
      Json envelope{{"error", *response.error_detail}};
      if (!response.output.is_null()) envelope["details"] = std::move(response.output);
      response.output = std::move(envelope);
    }
  });
  Json formatted{{"status", to_string(response.status)},
                 {"output", snapshot_value(response.output)}};
  if (response.error_detail) formatted["error"] = *response.error_detail;
  emit(request, kind, LifecycleStage::FormatOutput, Phase::After, std::move(formatted),
       record_late);
  return response;
}

OxyResponse Runtime::execute(OxyRequest& request, const OxySpec& spec) {
  switch (spec.kind) {
    case NodeKind::Tool: return execute_tool(request, spec);
    case NodeKind::Llm: return execute_llm(request, spec);
    case NodeKind::Flow:
      return execute_flow(request, spec, spec.config.value("plan", Json::array()));
    case NodeKind::Agent: break;
  }
  return OxyResponse::failure("unsupported node kind");
}

OxyResponse Runtime::execute_tool(OxyRequest& request, const OxySpec& spec) {
  const auto handler_name = spec.config.value("handler", spec.name);
  ToolHandler handler;
  {
    std::lock_guard lock(tools_mutex_);
    if (auto it = tools_.find(handler_name); it != tools_.end()) handler = it->second;
  }
  if (!handler) return OxyResponse::failure("no tool handler '" + handler_name + "'");
  const Json params = spec.config.value("params", Json::object());
  ToolContext ctx{request, params, *this};
  try {
    return OxyResponse::success(handler(ctx));
  } catch (const std::exception& e) {
    return OxyResponse::failure(spec.name + ": " + e.what());
  }
}

OxyResponse Runtime::execute_llm(OxyRequest& request, const OxySpec& spec) {
  const auto binding = request.binding_override.value_or(spec.config.value("binding", ""));
  std::vector<ChatMessage> messages;
  if (request.arguments.contains("messages")) {
    messages = messages_from_json(request.arguments["messages"]);
  } else if (request.arguments.contains("prompt")) {
    const auto& prompt = request.arguments["prompt"];
    messages.push_back({Role::User, prompt.is_string() ? prompt.get<std::string>() : prompt.dump()});
  } else {
    return OxyResponse::failure("llm call needs 'messages' or 'prompt'");
  }
  try {
    return OxyResponse::success(models_.complete(binding, messages));
  } catch (const Error& e) {
    return OxyResponse::failure(std::string(to_string(e.code())) + ": " + e.what());
  }
}

OxyResponse Runtime::execute_flow(OxyRequest& request, const OxySpec& spec, const Json& plan) {
  if (!plan.is_array()) return OxyResponse::failure("flow plan of " + spec.name + " is not a list");
  Json previous;
  for (const auto& step : plan) {
    const auto callee = step.value("callee", "");
    const auto auth = authorize(registry_, spec.name, callee);
    if (!auth.allowed) return OxyResponse::failure(auth.reason);
    auto child = make_child(request, callee,
                            substitute(step.value("arguments", Json::object()), request.arguments,
                                       previous));
    auto result = call(std::move(child));
    if (!result.ok())
      return OxyResponse::failure("step " + callee + " failed: " + result.error_detail.value_or(""));
    previous = std::move(result.output);
  }
  return OxyResponse::success(std::move(previous));
}

std::string Runtime::regenerate(const std::string& trace_id, const std::string& version_id,
                                const std::string& call_id, const CallOverrides& overrides) {
  if (!traces_->sealed(trace_id, version_id))
    throw Error(Errc::UnsealedTrace, "trace " + trace_id + " is still running");
  auto plan = std::make_shared<ReplayPlan>();
  plan->original = assemble_graph(*traces_, trace_id, version_id);
  const auto* target = plan->original.node(call_id);
  if (!target) throw Error(Errc::UnknownCall, "unknown call " + call_id);
  if (overrides.model_binding) {
    if (!models_.contains(*overrides.model_binding))
      throw Error(Errc::OverrideInvalid, "model binding '" + *overrides.model_binding + "' not registered");
    if (target->kind != NodeKind::Agent && target->kind != NodeKind::Llm)
      throw Error(Errc::OverrideInvalid, "model_binding override needs an agent or llm call");
  }
  if (overrides.system_prompt && target->kind != NodeKind::Agent)
    throw Error(Errc::OverrideInvalid, "system_prompt override needs an agent call");

  const auto* root = plan->original.root();
  if (is_truncated_snapshot(root->input))
    throw Error(Errc::OverrideInvalid, "root input was truncated and cannot be replayed");
  plan->target_call_id = call_id;
  plan->target_first_seq = target->first_seq;
  plan->overrides = overrides;
  for (auto parent = target->parent_call_id; parent;) {
    plan->ancestors.insert(*parent);
    const auto* node = plan->original.node(*parent);
    parent = node ? node->parent_call_id : std::nullopt;
  }
  plan->child_index[{"", 0}] = root->call_id;
  for (const auto& node : plan->original.nodes) {
    auto kids = plan->original.children(node.call_id);
    std::sort(kids.begin(), kids.end(),
              [](const TraceNode* a, const TraceNode* b) { return a->first_seq < b->first_seq; });
    for (std::size_t i = 0; i < kids.size(); ++i)
      plan->child_index[{node.call_id, static_cast<int>(i)}] = kids[i]->call_id;
  }

  std::vector<std::uint64_t> inherited;
  for (const auto& e : traces_->events(trace_id, version_id))
    if (e.seq < target->first_seq) inherited.push_back(e.seq);
  Json description{{"call_id", call_id}, {"node", target->name}, {"overrides", to_json(overrides)}};
  Json origin{{"kind", "regeneration"},
              {"root_caller", target->caller},
              {"target_call_id", call_id},
              {"source_version", version_id}};
  const auto new_version = traces_->open_version(trace_id, version_id, inherited,
                                                 std::move(description), std::move(origin));

  OxyRequest request;
  request.request_id = new_version;
  request.caller = root->caller;
  request.callee = root->name;
  request.arguments = root->input;
  request.group_id = root->group_id;
  request.call_chain = {root->caller};
  request.scopes = &scopes_;
  request.trace_id = trace_id;
  request.version_id = new_version;
  request.replay = plan;
  request.frame = std::make_shared<CallFrame>();
  request.frame->replay_root = true;
  call(std::move(request));
  traces_->seal(trace_id, new_version);
  scopes_.drop_request(new_version);
  return new_version;
}

}  // namespace oxy
