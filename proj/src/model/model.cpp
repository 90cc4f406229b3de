#include "oxy/model/model.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "oxy/error.hpp"

namespace oxy {

std::string_view to_string(Role role) noexcept {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    case Role::Tool: return "tool";
  }
  return "?";
}

std::optional<Role> parse_role(std::string_view text) noexcept {
  for (auto role : {Role::System, Role::User, Role::Assistant, Role::Tool})
    if (to_string(role) == text) return role;
  return std::nullopt;
}

Json to_json(const ChatMessage& m) {
  return Json{{"role", to_string(m.role)}, {"content", m.content}};
}

ChatMessage message_from_json(const Json& j) {
  if (!j.is_object()) throw Error(Errc::InvalidArgument, "chat message must be an object");
  const auto role = parse_role(j.value("role", ""));
  if (!role) throw Error(Errc::InvalidArgument, "chat message role must be system|user|assistant|tool");
  const auto& content = j.at("content");
  return ChatMessage{*role, content.is_string() ? content.get<std::string>() : content.dump()};
}

std::vector<ChatMessage> messages_from_json(const Json& j) {
  if (!j.is_array()) throw Error(Errc::InvalidArgument, "messages must be a list");
  std::vector<ChatMessage> out;
  out.reserve(j.size());
  for (const auto& m : j) out.push_back(message_from_json(m));
  return out;
}

Json to_json(std::span<const ChatMessage> messages) {
  Json out = Json::array();
  for (const auto& m : messages) out.push_back(to_json(m));
  return out;
}

std::string render_for_matching(std::span<const ChatMessage> messages) {
  std::string text;
  for (const auto& m : messages) {
    text += to_string(m.role);
    text += ": ";
    text += m.content;
    text += '\n';
  }
  return text;
}

ScriptedModel::ScriptedModel(std::vector<ScriptedRule> rules,
                             std::optional<std::string> default_reply,
                             std::chrono::milliseconds latency)
    : default_reply_(std::move(default_reply)), latency_(latency) {
  rules_.reserve(rules.size());
  for (auto& rule : rules) {
    CompiledRule compiled{std::move(rule), std::nullopt, std::make_unique<std::atomic<int>>(0)};
    if (compiled.rule.is_regex) {
      try {
        compiled.pattern.emplace(compiled.rule.match, std::regex::ECMAScript);
      } catch (const std::regex_error& e) {
        throw Error(Errc::ConfigError, "bad rule regex '" + compiled.rule.match + "': " + e.what());
      }
    }
    rules_.push_back(std::move(compiled));
  }
}

std::unique_ptr<ScriptedModel> ScriptedModel::from_json(const Json& j) {
  if (!j.is_object() || !j.contains("rules") || !j["rules"].is_array())
    throw Error(Errc::ConfigError, "scripted rules must be {\"rules\": [...]}");
  std::vector<ScriptedRule> rules;
  for (const auto& r : j["rules"]) {
    ScriptedRule rule;
    if (r.contains("regex")) {
      rule.match = r["regex"].get<std::string>();
      rule.is_regex = true;
    } else if (r.contains("match")) {
      rule.match = r["match"].get<std::string>();
    } else {
      throw Error(Errc::ConfigError, "scripted rule needs 'match' or 'regex'");
    }
    const auto& reply = r.at("reply");
    rule.reply = reply.is_string() ? reply.get<std::string>() : reply.dump();
    if (r.contains("max_uses")) rule.max_uses = r["max_uses"].get<int>();
    rules.push_back(std::move(rule));
  }
  std::optional<std::string> fallback;
  if (j.contains("default_reply")) fallback = j["default_reply"].get<std::string>();
  return std::make_unique<ScriptedModel>(std::move(rules), std::move(fallback),
                                         std::chrono::milliseconds(j.value("latency_ms", 0)));
}

std::string ScriptedModel::complete(std::span<const ChatMessage> messages) {
  if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
  const auto prompt = render_for_matching(messages);
  for (auto& compiled : rules_) {
    std::smatch match;
    if (compiled.pattern) {
      if (!std::regex_search(prompt, match, *compiled.pattern)) continue;
    } else if (prompt.find(compiled.rule.match) == std::string::npos) {
      continue;
    }
    if (compiled.rule.max_uses) {
      // Claim one use atomically; an exhausted rule falls through.
      int used = compiled.uses->load();
      bool claimed = false;
      while (used < *compiled.rule.max_uses) {
        if (compiled.uses->compare_exchange_weak(used, used + 1)) {
          claimed = true;
          break;
        }
      }
      if (!claimed) continue;
    }
    if (compiled.pattern) return match.format(compiled.rule.reply);
    return compiled.rule.reply;
  }
  if (default_reply_) return *default_reply_;
  throw Error(Errc::NoRuleMatched, "no scripted rule matched the prompt");
}

ModelBinding binding_from_json(const Json& j, const std::string& base_dir) {
  ModelBinding binding;
  binding.name = j.value("name", "");
  if (binding.name.empty()) throw Error(Errc::ConfigError, "model binding needs a name");
  const auto kind = j.value("kind", "scripted");
  if (kind == "scripted") {
    ScriptedSource source;
    if (j.contains("rules_file")) {
      std::filesystem::path path = j["rules_file"].get<std::string>();
      if (path.is_relative()) path = std::filesystem::path(base_dir) / path;
      source.rules_file = path.string();
    } else if (j.contains("rules")) {
      source.inline_rules = Json{{"rules", j["rules"]}};
      if (j.contains("default_reply")) source.inline_rules["default_reply"] = j["default_reply"];
      if (j.contains("latency_ms")) source.inline_rules["latency_ms"] = j["latency_ms"];
    } else {
      throw Error(Errc::ConfigError, "scripted binding '" + binding.name + "' has no rules");
    }
    binding.kind = std::move(source);
  } else if (kind == "http") {
    HttpEndpoint endpoint;
    endpoint.base_url = j.at("base_url").get<std::string>();
    endpoint.model = j.value("model", "");
    endpoint.timeout_ms = j.value("timeout_ms", 30000);
    endpoint.auth_env = j.value("auth_env", "");
    endpoint.params = j.value("params", Json::object());
    binding.kind = std::move(endpoint);
  } else {
    throw Error(Errc::ConfigError, "unknown binding kind '" + kind + "'");
  }
  return binding;
}

void ModelAdapter::add(const ModelBinding& binding) {
  std::shared_ptr<ModelClient> client;
  if (const auto* scripted = std::get_if<ScriptedSource>(&binding.kind)) {
    Json rules = scripted->inline_rules;
    if (!scripted->rules_file.empty()) {
      std::ifstream in(scripted->rules_file);
      if (!in) throw Error(Errc::ConfigError, "cannot open rules file " + scripted->rules_file);
      rules = Json::parse(in, nullptr, false);
      if (rules.is_discarded())
        throw Error(Errc::ConfigError, "rules file " + scripted->rules_file + " is not JSON");
    }
    client = ScriptedModel::from_json(rules);
  } else {
    client = std::make_shared<HttpModel>(std::get<HttpEndpoint>(binding.kind));
  }
  add(binding.name, std::move(client));
}

void ModelAdapter::add(std::string name, std::shared_ptr<ModelClient> client) {
  std::unique_lock lock(mutex_);
  clients_[std::move(name)] = std::move(client);
}

bool ModelAdapter::contains(std::string_view name) const {
  std::shared_lock lock(mutex_);
  return clients_.contains(std::string(name));
}

std::vector<std::string> ModelAdapter::names() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [name, _] : clients_) out.push_back(name);
  std::sort(out.begin(), out.end());
  return out;
}

std::string ModelAdapter::complete(std::string_view binding,
                                   std::span<const ChatMessage> messages) const {
  std::shared_ptr<ModelClient> client;
  {
    std::shared_lock lock(mutex_);
    auto it = clients_.find(std::string(binding));
    if (it == clients_.end())
      throw Error(Errc::ModelUnavailable, "model binding '" + std::string(binding) + "' not registered");
    client = it->second;
  }
  return client->complete(messages);
}

}  // namespace oxy
