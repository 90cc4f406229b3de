#include "oxy/scopes/scope_store.hpp"

#include <mutex>

#include "oxy/error.hpp"

namespace oxy {

std::string_view to_string(ScopeLevel level) noexcept {
  switch (level) {
    case ScopeLevel::Application: return "application";
    case ScopeLevel::SessionGroup: return "group";
    case ScopeLevel::Request: return "request";
    case ScopeLevel::Node: return "node";
  }
  return "?";
}

std::optional<ScopeLevel> parse_scope_level(std::string_view text) noexcept {
  for (auto level : {ScopeLevel::Application, ScopeLevel::SessionGroup, ScopeLevel::Request,
                     ScopeLevel::Node})
    if (to_string(level) == text) return level;
  return std::nullopt;
}

namespace {
const std::string& require_group(const OxyRequest& request) {
  if (!request.group_id || request.group_id->empty())
    throw Error(Errc::MissingGroupId, "request " + request.request_id + " has no group id");
  return *request.group_id;
}
}  // namespace

void ScopeStore::set(OxyRequest& request, ScopeLevel level, std::string_view key, Json value) {
  if (key.empty()) throw Error(Errc::InvalidArgument, "scope key must be non-empty");
  std::string k(key);
  switch (level) {
    case ScopeLevel::Application: {
      std::unique_lock lock(app_mutex_);
      application_[k] = std::move(value);
      return;
    }
    case ScopeLevel::SessionGroup: {
      const auto& group = require_group(request);
      std::unique_lock lock(group_mutex_);
      groups_[group][k] = std::move(value);
      return;
    }
    case ScopeLevel::Request: {
      std::unique_lock lock(request_mutex_);
      requests_[request.request_id][k] = std::move(value);
      return;
    }
    case ScopeLevel::Node:
      request.set_arguments(key, std::move(value));
      return;
  }
}

std::optional<Json> ScopeStore::get(const OxyRequest& request, ScopeLevel level,
                                    std::string_view key) const {
  std::string k(key);
  switch (level) {
    case ScopeLevel::Application: {
      std::shared_lock lock(app_mutex_);
      auto it = application_.find(k);
      if (it == application_.end()) return std::nullopt;
      return it->second;
    }
    case ScopeLevel::SessionGroup: {
      const auto& group = require_group(request);
      std::shared_lock lock(group_mutex_);
      auto g = groups_.find(group);
      if (g == groups_.end()) return std::nullopt;
      auto it = g->second.find(k);
      if (it == g->second.end()) return std::nullopt;
      return it->second;
    }
    case ScopeLevel::Request: {
      std::shared_lock lock(request_mutex_);
      auto r = requests_.find(request.request_id);
      if (r == requests_.end()) return std::nullopt;
      auto it = r->second.find(k);
      if (it == r->second.end()) return std::nullopt;
      return it->second;
    }
    case ScopeLevel::Node: {
      if (!request.arguments.is_object()) return std::nullopt;
      auto it = request.arguments.find(k);
      if (it == request.arguments.end()) return std::nullopt;
      return *it;
    }
  }
  return std::nullopt;
}

void ScopeStore::drop_request(const std::string& request_id) {
  std::unique_lock lock(request_mutex_);
  requests_.erase(request_id);
}

bool ScopeStore::has_request(const std::string& request_id) const {
  std::shared_lock lock(request_mutex_);
  return requests_.contains(request_id);
}

Json ScopeStore::dump(const std::string& request_id,
                      const std::optional<std::string>& group_id) const {
  Json out{{"application", Json::object()}, {"group", Json::object()}, {"request", Json::object()}};
  {
    std::shared_lock lock(app_mutex_);
    for (const auto& [k, v] : application_) out["application"][k] = v;
  }
  if (group_id) {
    std::shared_lock lock(group_mutex_);
    if (auto g = groups_.find(*group_id); g != groups_.end())
      for (const auto& [k, v] : g->second) out["group"][k] = v;
  }
  {
    std::shared_lock lock(request_mutex_);
    if (auto r = requests_.find(request_id); r != requests_.end())
      for (const auto& [k, v] : r->second) out["request"][k] = v;
  }
  return out;
}

}  // namespace oxy
