#pragma once

#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>

#include "oxy/core/types.hpp"

namespace oxy {

enum class ScopeLevel { Application, SessionGroup, Request, Node };

std::string_view to_string(ScopeLevel level) noexcept;
std::optional<ScopeLevel> parse_scope_level(std::string_view text) noexcept;

/// Four-tier state. Application is global to this runtime instance,
/// SessionGroup is keyed by group id, Request by request id, and Node data
/// lives on the request envelope itself.
class ScopeStore {
 public:
  /// Last writer wins. Throws MissingGroupId, InvalidArgument (empty key).
  void set(OxyRequest& request, ScopeLevel level, std::string_view key, Json value);
  std::optional<Json> get(const OxyRequest& request, ScopeLevel level,
                          std::string_view key) const;

  /// Drops the request map once its root run is sealed.
  void drop_request(const std::string& request_id);
  bool has_request(const std::string& request_id) const;

  /// Debug view: {"application":{}, "group":{}, "request":{}}.
  Json dump(const std::string& request_id, const std::optional<std::string>& group_id) const;

 private:
  using Map = std::unordered_map<std::string, Json>;

  mutable std::shared_mutex app_mutex_;
  Map application_;
  mutable std::shared_mutex group_mutex_;
  std::unordered_map<std::string, Map> groups_;
  mutable std::shared_mutex request_mutex_;
  std::unordered_map<std::string, Map> requests_;
};

}  // namespace oxy
