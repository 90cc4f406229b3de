#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "oxy/tracer/trace_store.hpp"

namespace oxy {

enum class NodeStatus { Ok, Error, Running };
std::string_view to_string(NodeStatus s) noexcept;

struct TraceNode {
  std::string call_id;
  std::optional<std::string> parent_call_id;
  std::string caller;
  std::optional<std::string> group_id;
  std::string name;
  NodeKind kind = NodeKind::Tool;
  NodeStatus status = NodeStatus::Running;
  double start_ms = 0;
  double end_ms = 0;
  std::uint64_t first_seq = 0;
  std::uint64_t last_seq = 0;
  Json input;
  Json output;
  std::optional<std::string> error;
  Json react;  // agent transcript when present

  double duration_ms() const { return end_ms - start_ms; }
};

struct ExecutionGraph {
  std::string trace_id;
  std::string version_id;
  std::optional<std::string> parent_version;
  std::vector<TraceNode> nodes;  // ordered by first seq
  std::vector<std::pair<std::string, std::string>> edges;  // caller call_id -> callee call_id

  const TraceNode* node(std::string_view call_id) const;
  const TraceNode* root() const;
  std::vector<const TraceNode*> children(std::string_view call_id) const;
  /// call_id followed by every descendant.
  std::vector<std::string> subtree(std::string_view call_id) const;
};

/// Deterministic function of the event list.
ExecutionGraph build_graph(const std::vector<TraceEvent>& events);
/// Throws UnknownTrace.
ExecutionGraph assemble_graph(const TraceStore& store, const std::string& trace_id,
                              const std::optional<std::string>& version_id = std::nullopt);

Json to_json(const ExecutionGraph& graph);

/// Distinct node names and distinct (caller name, callee name) edges.
struct NameView {
  std::vector<std::string> names;
  std::vector<std::pair<std::string, std::string>> edges;
};
NameView name_view(const ExecutionGraph& graph);

/// Timestamps dropped, call_ids replaced by DFS index.
Json normalize(const ExecutionGraph& graph);
/// Normalized form of one subtree.
Json normalize_subtree(const ExecutionGraph& graph, std::string_view call_id);

/// DOT digraph, nodes sorted by call_id, labels `name [kind] status duration_ms`.
std::string export_dot(const ExecutionGraph& graph);

struct TimingEntry {
  double llm_ms = 0;
  double tool_ms = 0;
  double agent_ms = 0;
  double self_ms = 0;
  double wall_ms = 0;
};

struct TimingBreakdown {
  std::map<std::string, TimingEntry> per_call;
  std::map<std::string, TimingEntry> per_node;
  std::string root_call_id;
  double root_wall_ms = 0;
};

Json to_json(const TimingBreakdown& t);

/// Children's inclusive time bucketed by the child's kind. Throws
/// UnknownTrace, UnsealedTrace.
TimingBreakdown timing_report(const TraceStore& store, const std::string& trace_id,
                              const std::optional<std::string>& version_id = std::nullopt);
TimingBreakdown timing_of(const ExecutionGraph& graph);

/// Semantic projection used for digesting and priority:
/// {"root_caller":..., "calls":[{node, kind, input, output, status}...]}.
Json trace_export(const TraceStore& store, const std::string& trace_id,
                  const std::string& version_id);

}  // namespace oxy
