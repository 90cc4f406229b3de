#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <optional>
#include <regex>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "oxy/json.hpp"

namespace oxy {

enum class Role { System, User, Assistant, Tool };

std::string_view to_string(Role role) noexcept;
std::optional<Role> parse_role(std::string_view text) noexcept;

struct ChatMessage {
  Role role = Role::User;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

Json to_json(const ChatMessage& m);
ChatMessage message_from_json(const Json& j);
std::vector<ChatMessage> messages_from_json(const Json& j);
Json to_json(std::span<const ChatMessage> messages);

/// The text scripted rules are matched against: "<role>: <content>\n" per message.
std::string render_for_matching(std::span<const ChatMessage> messages);

/// Chat-completion backend.
class ModelClient {
 public:
  virtual ~ModelClient() = default;
  /// Throws ModelUnavailable or NoRuleMatched.
  virtual std::string complete(std::span<const ChatMessage> messages) = 0;
};

struct ScriptedRule {
  std::string match;  // substring, or ECMAScript regex when `is_regex`
  bool is_regex = false;
  std::string reply;  // for regex rules "$1"-style captures are substituted
  std::optional<int> max_uses;
};

/// Deterministic rule-driven model: the first matching rule that still has
/// uses left fires; otherwise the default reply, else NoRuleMatched.
class ScriptedModel final : public ModelClient {
 public:
  ScriptedModel(std::vector<ScriptedRule> rules, std::optional<std::string> default_reply,
                std::chrono::milliseconds latency = std::chrono::milliseconds{0});

  /// Parses {"rules":[{match|regex, reply, max_uses?}], "default_reply"?, "latency_ms"?}.
  static std::unique_ptr<ScriptedModel> from_json(const Json& j);

  std::string complete(std::span<const ChatMessage> messages) override;

  std::size_t rule_count() const { return rules_.size(); }

 private:
  struct CompiledRule {
    ScriptedRule rule;
    std::optional<std::regex> pattern;
    std::unique_ptr<std::atomic<int>> uses;
  };

  std::vector<CompiledRule> rules_;
  std::optional<std::string> default_reply_;
  std::chrono::milliseconds latency_;
};

struct HttpEndpoint {
  std::string base_url;  // e.g. http://127.0.0.1:8000/v1
  std::string model;
  int timeout_ms = 30000;
  std::string auth_env;  // name of the env var holding the bearer token
  Json params = Json::object();  // passed through (temperature, ...)
};

/// OpenAI-compatible chat-completions client. Retries once on timeout.
class HttpModel final : public ModelClient {
 public:
  explicit HttpModel(HttpEndpoint endpoint);

  std::string complete(std::span<const ChatMessage> messages) override;

  /// Body POSTed to {base_url}/chat/completions.
  Json request_body(std::span<const ChatMessage> messages) const;

 private:
  HttpEndpoint endpoint_;
};

struct ScriptedSource {
  std::string rules_file;  // resolved path; empty when rules are inline
  Json inline_rules;       // {"rules": [...], ...}
};

struct ModelBinding {
  std::string name;
  std::variant<ScriptedSource, HttpEndpoint> kind;
};

/// Parses a model_bindings entry; relative rules paths resolve against `base_dir`.
ModelBinding binding_from_json(const Json& j, const std::string& base_dir);

/// Named bindings. Safe for concurrent completion.
class ModelAdapter {
 public:
  void add(const ModelBinding& binding);
  void add(std::string name, std::shared_ptr<ModelClient> client);
  bool contains(std::string_view name) const;
  std::vector<std::string> names() const;

  /// Throws ModelUnavailable when the binding is unknown.
  std::string complete(std::string_view binding, std::span<const ChatMessage> messages) const;

 private:
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, std::shared_ptr<ModelClient>> clients_;
};

}  // namespace oxy
