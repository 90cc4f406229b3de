#pragma once

#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "oxy/core/types.hpp"

namespace oxy {

/// Name -> spec map. Concurrent reads, serialized registrations. Registered
/// specs are immutable except for the system-prompt hot update.
class Registry {
 public:
  /// Throws NameConflict or InvalidSpec.
  void register_node(OxySpec spec);

  /// Throws NodeNotFound.
  OxySpec resolve(std::string_view name) const;
  std::optional<OxySpec> find(std::string_view name) const;
  bool contains(std::string_view name) const;

  /// All specs in registration order.
  std::vector<OxySpec> snapshot() const;
  Json snapshot_json() const;

  /// Hot-swaps an agent's system prompt. Throws NodeNotFound / InvalidSpec.
  void set_system_prompt(std::string_view agent, std::string prompt);

 private:
  mutable std::shared_mutex mutex_;
  std::vector<OxySpec> specs_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Rejects specs violating the structural invariants.
void check_spec(const OxySpec& spec);

enum class IssueKind { DanglingPermission, UnreachableNode, LeafWithPermissions, Cycle };
enum class Severity { Error, Info };

struct TopologyIssue {
  IssueKind kind;
  Severity severity;
  std::string node;
  std::string target;  // set for DanglingPermission

  bool operator==(const TopologyIssue&) const = default;
};

std::string_view to_string(IssueKind kind) noexcept;
Json to_json(const TopologyIssue& issue);

/// Permission edges plus each agent's own llm binding and each flow's plan.
std::vector<std::string> outgoing_edges(const OxySpec& spec);

/// Issues sorted by node name. Cycles among agents are Info.
std::vector<TopologyIssue> validate_topology(std::span<const OxySpec> specs,
                                             std::span<const std::string> entrypoints);
std::vector<TopologyIssue> validate_topology(const Registry& registry,
                                             std::span<const std::string> entrypoints);

}  // namespace oxy
