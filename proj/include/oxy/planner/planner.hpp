#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "oxy/core/registry.hpp"
#include "oxy/core/types.hpp"
#include "oxy/model/model.hpp"

namespace oxy {

class Runtime;

struct CallAction {
  std::string callee;
  Json arguments = Json::object();
  bool operator==(const CallAction&) const = default;
};

struct FinalAnswer {
  Json answer;
  bool operator==(const FinalAnswer&) const = default;
};

using ActionDecision = std::variant<CallAction, FinalAnswer>;

struct ParseFailure {
  std::string detail;
  bool operator==(const ParseFailure&) const = default;
};

using ParseResult = std::variant<CallAction, FinalAnswer, ParseFailure>;

/// First syntactically valid JSON object with a string "tool_name" wins.
/// A ```json / ```action fence whose body is not valid JSON is a
/// ParseFailure. Anything else is the (trimmed) final answer.
ParseResult parse_action(std::string_view model_text);

Json to_json(const ActionDecision& d);

namespace memory {
struct SystemPrompt { std::string text; };
struct UserQuery { std::string text; };
struct ModelThought { std::string text; };
struct ActionTaken { ActionDecision decision; };
struct Observation { std::string node; Json value; };
struct FailureObservation { std::string node; std::string error; };
}  // namespace memory

using MemoryEntry = std::variant<memory::SystemPrompt, memory::UserQuery, memory::ModelThought,
                                 memory::ActionTaken, memory::Observation,
                                 memory::FailureObservation>;

/// Append-only reasoning memory of one ReAct loop.
class ReactMemory {
 public:
  void append(MemoryEntry entry) { entries_.push_back(std::move(entry)); }
  const std::vector<MemoryEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  template <class T>
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += std::holds_alternative<T>(e) ? 1 : 0;
    return n;
  }

 private:
  std::vector<MemoryEntry> entries_;
};

Json to_json(const MemoryEntry& entry);
Json to_json(const ReactMemory& memory);

struct Authorization {
  bool allowed = false;
  std::string reason;
};

/// Allowed iff callee is in caller's permitted list. Throws NodeNotFound
/// for an unregistered caller.
Authorization authorize(const Registry& registry, std::string_view caller,
                        std::string_view callee);

/// "permission denied: <caller> -> <callee>"
std::string permission_denied_text(std::string_view caller, std::string_view callee);

/// Appends FailureObservation(node, error).
void encapsulate_failure(std::string_view node, std::string_view error, ReactMemory& memory);

inline constexpr std::string_view kPromptTemplateVersion = "react-v1";
inline constexpr std::size_t kObservationLimit = 8 * 1024;

/// Renders one planning round: system prompt + tools block (system message),
/// then memory + output instruction (user message).
std::vector<ChatMessage> render_prompt(const OxySpec& agent, const Registry& registry,
                                       const ReactMemory& memory);

struct AgentLimits {
  int max_react_rounds = 16;
  int retry_limit = 3;
  int fail_streak_limit = 3;
};

AgentLimits agent_limits(const OxySpec& agent);

/// Completion for a rendered prompt. Throws ModelUnavailable.
using ModelInvoker = std::function<std::string(const std::vector<ChatMessage>&)>;

/// One planning decision; parse failures are recorded in memory and retried.
/// Throws RetryExhausted, ModelUnavailable.
ActionDecision plan_step(const OxySpec& agent, const Registry& registry, ReactMemory& memory,
                         const ModelInvoker& model, int retry_limit);

struct ReactResult {
  OxyResponse response;
  ReactMemory memory;
  int rounds = 0;      // executed (or denied) actions
  int plan_steps = 0;  // planning decisions, including the final one
};

Json to_json(const ReactResult& r);

/// The ReAct loop of one agent call. Failures are encapsulated into memory
/// and replanned; the loop fails fast after `fail_streak_limit` consecutive
/// failures and gives up after `max_react_rounds` actions.
ReactResult run_react(Runtime& runtime, const OxySpec& agent, OxyRequest& request);

}  // namespace oxy
