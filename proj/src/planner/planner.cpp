#include "oxy/planner/planner.hpp"

#include <algorithm>
#include <optional>

#include "oxy/core/runtime.hpp"
#include "oxy/error.hpp"

namespace oxy {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

// End index (exclusive) of the balanced object starting at `open`, if any.
std::optional<std::size_t> object_end(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return i + 1;
  }
  return std::nullopt;
}

std::optional<Json> try_parse(std::string_view text) {
  Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  return j;
}

struct Fence {
  std::string_view body;
};

std::vector<Fence> action_fences(std::string_view text) {
  std::vector<Fence> fences;
  std::size_t pos = 0;
  while ((pos = text.find("```", pos)) != std::string_view::npos) {
    const auto tag_start = pos + 3;
    const auto line_end = text.find('\n', tag_start);
    if (line_end == std::string_view::npos) break;
    auto tag = text.substr(tag_start, line_end - tag_start);
    while (!tag.empty() && (tag.back() == ' ' || tag.back() == '\r')) tag.remove_suffix(1);
    const auto close = text.find("```", line_end + 1);
    if (close == std::string_view::npos) break;
    if (tag == "json" || tag == "action")
      fences.push_back({text.substr(line_end + 1, close - line_end - 1)});
    pos = close + 3;
  }
  return fences;
}

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

std::string value_text(const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

std::string clip(std::string text) {
  if (text.size() <= kObservationLimit) return text;
  const auto dropped = text.size() - kObservationLimit;
  text.resize(kObservationLimit);
  return text + "... [truncated " + std::to_string(dropped) + " bytes]";
}

std::string render_entry(const MemoryEntry& entry) {
  return std::visit(
      overloaded{
          [](const memory::SystemPrompt&) { return std::string(); },
          [](const memory::UserQuery& e) { return "User query: " + e.text; },
          [](const memory::ModelThought& e) { return "Thought: " + e.text; },
          [](const memory::ActionTaken& e) {
            if (const auto* call = std::get_if<CallAction>(&e.decision))
              return "Action: " + Json{{"tool_name", call->callee}, {"arguments", call->arguments}}.dump();
            return "Final: " + value_text(std::get<FinalAnswer>(e.decision).answer);
          },
          [](const memory::Observation& e) {
            return "Observation from " + e.node + ": " + clip(value_text(e.value));
          },
          [](const memory::FailureObservation& e) {
            return "Failure from " + e.node + ": " + e.error;
          },
      },
      entry);
}

std::string query_text(const Json& arguments) {
  for (const char* key : {"query", "input", "question"}) {
    if (arguments.contains(key)) return value_text(arguments[key]);
  }
  return arguments.dump();
}

constexpr std::string_view kInstruction =
    "Reply with exactly one action as JSON {\"tool_name\": \"<name>\", \"arguments\": {...}} "
    "to call a tool, or with the final answer as plain text.";

}  // namespace

ParseResult parse_action(std::string_view text) {
  for (std::size_t i = text.find('{'); i != std::string_view::npos; i = text.find('{', i + 1)) {
    const auto end = object_end(text, i);
    if (!end) continue;
    auto j = try_parse(text.substr(i, *end - i));
    if (!j || !j->is_object()) continue;
    auto name = j->find("tool_name");
    if (name == j->end() || !name->is_string()) continue;
    CallAction call{name->get<std::string>(), Json::object()};
    if (auto args = j->find("arguments"); args != j->end() && args->is_object())
      call.arguments = *args;
    return call;
  }
  std::optional<Json> fenced;
  for (const auto& fence : action_fences(text)) {
    auto j = try_parse(fence.body);
    if (!j) return ParseFailure{"malformed JSON in action fence"};
    if (!fenced) fenced = std::move(j);
  }
  if (fenced) return FinalAnswer{std::move(*fenced)};
  return FinalAnswer{std::string(trim(text))};
}

Json to_json(const ActionDecision& d) {
  if (const auto* call = std::get_if<CallAction>(&d))
    return {{"type", "call"}, {"callee", call->callee}, {"arguments", call->arguments}};
  return {{"type", "final"}, {"answer", std::get<FinalAnswer>(d).answer}};
}

Json to_json(const MemoryEntry& entry) {
  return std::visit(
      overloaded{
          [](const memory::SystemPrompt& e) { return Json{{"type", "system_prompt"}, {"text", e.text}}; },
          [](const memory::UserQuery& e) { return Json{{"type", "user_query"}, {"text", e.text}}; },
          [](const memory::ModelThought& e) { return Json{{"type", "thought"}, {"text", e.text}}; },
          [](const memory::ActionTaken& e) {
            return Json{{"type", "action"}, {"decision", to_json(e.decision)}};
          },
          [](const memory::Observation& e) {
            return Json{{"type", "observation"}, {"node", e.node}, {"value", e.value}};
          },
          [](const memory::FailureObservation& e) {
            return Json{{"type", "failure"}, {"node", e.node}, {"error", e.error}};
          },
      },
      entry);
}

Json to_json(const ReactMemory& memory) {
  Json out = Json::array();
  for (const auto& e : memory.entries()) out.push_back(to_json(e));
  return out;
}

Authorization authorize(const Registry& registry, std::string_view caller,
                        std::string_view callee) {
  const auto spec = registry.resolve(caller);
  const auto& permitted = spec.permitted_callees;
  if (std::find(permitted.begin(), permitted.end(), callee) != permitted.end())
    return {true, ""};
  return {false, permission_denied_text(caller, callee)};
}

std::string permission_denied_text(std::string_view caller, std::string_view callee) {
  return "permission denied: " + std::string(caller) + " -> " + std::string(callee);
}

void encapsulate_failure(std::string_view node, std::string_view error, ReactMemory& memory) {
  memory.append(memory::FailureObservation{std::string(node), std::string(error)});
}

std::vector<ChatMessage> render_prompt(const OxySpec& agent, const Registry& registry,
                                       const ReactMemory& memory) {
  std::string system = agent.config.value("system_prompt", "");
  system += "\n\nTools available:\n";
  if (agent.permitted_callees.empty()) system += "(none)\n";
  for (const auto& name : agent.permitted_callees) {
    const auto spec = registry.find(name);
    system += name + ": " + (spec ? spec->description : std::string()) + "\n";
  }
  std::string user;
  for (const auto& entry : memory.entries()) {
    auto line = render_entry(entry);
    if (!line.empty()) user += line + "\n";
  }
  user += "\n";
  user += kInstruction;
  return {{Role::System, std::move(system)}, {Role::User, std::move(user)}};
}

AgentLimits agent_limits(const OxySpec& agent) {
  AgentLimits limits;
  limits.max_react_rounds = agent.config.value("max_react_rounds", limits.max_react_rounds);
  limits.retry_limit = agent.config.value("retry_limit", limits.retry_limit);
  limits.fail_streak_limit = agent.config.value("fail_streak_limit", limits.fail_streak_limit);
  return limits;
}

ActionDecision plan_step(const OxySpec& agent, const Registry& registry, ReactMemory& memory,
                         const ModelInvoker& model, int retry_limit) {
  for (int attempt = 0; attempt < std::max(retry_limit, 1); ++attempt) {
    const auto text = model(render_prompt(agent, registry, memory));
    auto parsed = parse_action(text);
    if (auto* failure = std::get_if<ParseFailure>(&parsed)) {
      memory.append(memory::ModelThought{text});
      encapsulate_failure(agent.name, "unparseable action: " + failure->detail, memory);
      continue;
    }
    ActionDecision decision = std::holds_alternative<CallAction>(parsed)
                                  ? ActionDecision(std::get<CallAction>(parsed))
                                  : ActionDecision(std::get<FinalAnswer>(parsed));
    memory.append(memory::ActionTaken{decision});
    return decision;
  }
  throw Error(Errc::RetryExhausted, agent.name + ": " + std::to_string(retry_limit) +
                                        " consecutive unparseable actions");
}

Json to_json(const ReactResult& r) {
  return {{"rounds", r.rounds}, {"plan_steps", r.plan_steps}, {"memory", to_json(r.memory)}};
}

ReactResult run_react(Runtime& runtime, const OxySpec& agent, OxyRequest& request) {
  ReactResult result;
  auto& memory = result.memory;
  const auto limits = agent_limits(agent);
  memory.append(memory::SystemPrompt{agent.config.value("system_prompt", "")});
  memory.append(memory::UserQuery{query_text(request.arguments)});

  auto fail = [&](std::string detail) {
    result.response = OxyResponse::failure(std::move(detail), Json{{"memory", to_json(memory)}});
    return result;
  };

  const auto llm = agent.config.value("llm", "");
  if (llm.empty()) return fail("agent " + agent.name + " has no llm");
  ModelInvoker invoke = [&](const std::vector<ChatMessage>& messages) {
    auto child = runtime.make_child(request, llm, Json{{"messages", to_json(messages)}});
    child.binding_override = request.binding_override;
    auto reply = runtime.call(std::move(child));
    if (!reply.ok()) throw Error(Errc::ModelUnavailable, reply.error_detail.value_or("llm failed"));
    return value_text(reply.output);
  };

  int streak = 0;
  try {
    while (true) {
      const auto decision =
          plan_step(agent, runtime.registry(), memory, invoke, limits.retry_limit);
      ++result.plan_steps;
      if (const auto* final_answer = std::get_if<FinalAnswer>(&decision)) {
        result.response = OxyResponse::success(final_answer->answer);
        return result;
      }
      if (result.rounds >= limits.max_react_rounds)
        return fail(agent.name + ": max_react_rounds " + std::to_string(limits.max_react_rounds) +
                    " exceeded");
      ++result.rounds;
      const auto& call = std::get<CallAction>(decision);
      const auto auth = authorize(runtime.registry(), agent.name, call.callee);
      if (!auth.allowed) {
        encapsulate_failure(call.callee, auth.reason, memory);
        ++streak;
      } else {
        auto reply = runtime.call(runtime.make_child(request, call.callee, call.arguments));
        if (reply.ok()) {
          memory.append(memory::Observation{call.callee, reply.output});
          streak = 0;
        } else {
          encapsulate_failure(call.callee, reply.error_detail.value_or("error"), memory);
          ++streak;
        }
      }
      if (streak >= limits.fail_streak_limit)
        return fail(agent.name + ": " + std::to_string(streak) + " consecutive failures");
    }
  } catch (const Error& e) {
    return fail(std::string(to_string(e.code())) + ": " + e.what());
  }
}

}  // namespace oxy
