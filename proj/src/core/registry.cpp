#include "oxy/core/registry.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <mutex>
#include <set>

#include "oxy/error.hpp"

namespace oxy {

void check_spec(const OxySpec& spec) {
  if (spec.name.empty()) throw Error(Errc::InvalidSpec, "node name must be non-empty");
  if (spec.name == kUserCaller) throw Error(Errc::InvalidSpec, "node name is reserved");
  if ((spec.kind == NodeKind::Tool || spec.kind == NodeKind::Llm) &&
      !spec.permitted_callees.empty()) {
    throw Error(Errc::InvalidSpec, "leaf node '" + spec.name + "' cannot delegate");
  }
  for (const auto& callee : spec.permitted_callees)
    if (callee.empty()) throw Error(Errc::InvalidSpec, "empty permitted callee in " + spec.name);
  if (!spec.config.is_object())
    throw Error(Errc::InvalidSpec, "config of '" + spec.name + "' must be an object");
}

void Registry::register_node(OxySpec spec) {
  if (spec.config.is_null()) spec.config = Json::object();
  check_spec(spec);
  std::unique_lock lock(mutex_);
  if (index_.contains(spec.name))
    throw Error(Errc::NameConflict, "node '" + spec.name + "' already registered");
  index_.emplace(spec.name, specs_.size());
  specs_.push_back(std::move(spec));
}

OxySpec Registry::resolve(std::string_view name) const {
  if (auto spec = find(name)) return *std::move(spec);
  throw Error(Errc::NodeNotFound, "node '" + std::string(name) + "' not found");
}

std::optional<OxySpec> Registry::find(std::string_view name) const {
  std::shared_lock lock(mutex_);
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return specs_[it->second];
}

bool Registry::contains(std::string_view name) const {
  std::shared_lock lock(mutex_);
  return index_.contains(std::string(name));
}

std::vector<OxySpec> Registry::snapshot() const {
  std::shared_lock lock(mutex_);
  return specs_;
}

Json Registry::snapshot_json() const {
  Json nodes = Json::array();
  for (const auto& spec : snapshot()) nodes.push_back(to_json(spec));
  return nodes;
}

void Registry::set_system_prompt(std::string_view agent, std::string prompt) {
  std::unique_lock lock(mutex_);
  auto it = index_.find(std::string(agent));
  if (it == index_.end())
    throw Error(Errc::NodeNotFound, "node '" + std::string(agent) + "' not found");
  auto& spec = specs_[it->second];
  if (spec.kind != NodeKind::Agent)
    throw Error(Errc::InvalidSpec, "'" + spec.name + "' is not an agent");
  spec.config["system_prompt"] = std::move(prompt);
}

std::string_view to_string(IssueKind kind) noexcept {
  switch (kind) {
    case IssueKind::DanglingPermission: return "DanglingPermission";
    case IssueKind::UnreachableNode: return "UnreachableNode";
    case IssueKind::LeafWithPermissions: return "LeafWithPermissions";
    case IssueKind::Cycle: return "Cycle";
  }
  return "?";
}

Json to_json(const TopologyIssue& issue) {
  Json j{{"kind", to_string(issue.kind)},
         {"severity", issue.severity == Severity::Error ? "error" : "info"},
         {"node", issue.node}};
  if (!issue.target.empty()) j["target"] = issue.target;
  return j;
}

std::vector<std::string> outgoing_edges(const OxySpec& spec) {
  std::vector<std::string> out = spec.permitted_callees;
  if (spec.kind == NodeKind::Agent) {
    if (auto it = spec.config.find("llm"); it != spec.config.end() && it->is_string()) {
      auto llm = it->get<std::string>();
      if (std::find(out.begin(), out.end(), llm) == out.end()) out.push_back(std::move(llm));
    }
  }
  return out;
}

std::vector<TopologyIssue> validate_topology(std::span<const OxySpec> specs,
                                             std::span<const std::string> entrypoints) {
  std::map<std::string, const OxySpec*> by_name;
  for (const auto& spec : specs) by_name.emplace(spec.name, &spec);

  std::vector<TopologyIssue> issues;
  for (const auto& [name, spec] : by_name) {
    if ((spec->kind == NodeKind::Tool || spec->kind == NodeKind::Llm) &&
        !spec->permitted_callees.empty()) {
      issues.push_back({IssueKind::LeafWithPermissions, Severity::Error, name, {}});
    }
    for (const auto& target : outgoing_edges(*spec))
      if (!by_name.contains(target))
        issues.push_back({IssueKind::DanglingPermission, Severity::Error, name, target});
  }

  if (!entrypoints.empty()) {
    std::set<std::string> seen;
    std::vector<std::string> frontier;
    for (const auto& entry : entrypoints) {
      auto it = by_name.find(entry);
      if (it != by_name.end() && it->second->kind == NodeKind::Agent && seen.insert(entry).second)
        frontier.push_back(entry);
    }
    while (!frontier.empty()) {
      const auto name = frontier.back();
      frontier.pop_back();
      for (const auto& target : outgoing_edges(*by_name.at(name)))
        if (by_name.contains(target) && seen.insert(target).second) frontier.push_back(target);
    }
    for (const auto& [name, spec] : by_name)
      if (!seen.contains(name))
        issues.push_back({IssueKind::UnreachableNode, Severity::Error, name, {}});
  }

  // Tarjan over agent -> agent permission edges.
  std::map<std::string, int> index, low;
  std::set<std::string> on_stack;
  std::vector<std::string> stack;
  int counter = 0;
  std::set<std::string> cyclic;
  std::function<void(const std::string&)> strongconnect = [&](const std::string& v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack.insert(v);
    bool self_loop = false;
    for (const auto& w : by_name.at(v)->permitted_callees) {
      auto it = by_name.find(w);
      if (it == by_name.end() || it->second->kind != NodeKind::Agent) continue;
      if (w == v) self_loop = true;
      if (!index.contains(w)) {
        strongconnect(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack.contains(w)) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      std::vector<std::string> component;
      std::string w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack.erase(w);
        component.push_back(w);
      } while (w != v);
      if (component.size() > 1 || self_loop) cyclic.insert(component.begin(), component.end());
    }
  };
  for (const auto& [name, spec] : by_name)
    if (spec->kind == NodeKind::Agent && !index.contains(name)) strongconnect(name);
  for (const auto& name : cyclic) issues.push_back({IssueKind::Cycle, Severity::Info, name, {}});

  std::stable_sort(issues.begin(), issues.end(), [](const auto& a, const auto& b) {
    return std::tie(a.node, a.kind, a.target) < std::tie(b.node, b.kind, b.target);
  });
  return issues;
}

std::vector<TopologyIssue> validate_topology(const Registry& registry,
                                             std::span<const std::string> entrypoints) {
  const auto specs = registry.snapshot();
  return validate_topology(std::span<const OxySpec>(specs), entrypoints);
}

}  // namespace oxy
