#include "oxy/tracer/graph.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <unordered_map>

#include "oxy/error.hpp"

namespace oxy {

std::string_view to_string(NodeStatus s) noexcept {
  switch (s) {
    case NodeStatus::Ok: return "Ok";
    case NodeStatus::Error: return "Error";
    case NodeStatus::Running: return "Running";
  }
  return "?";
}

const TraceNode* ExecutionGraph::node(std::string_view call_id) const {
  for (const auto& n : nodes)
    if (n.call_id == call_id) return &n;
  return nullptr;
}

const TraceNode* ExecutionGraph::root() const {
  for (const auto& n : nodes)
    if (!n.parent_call_id || node(*n.parent_call_id) == nullptr) return &n;
  return nullptr;
}

std::vector<const TraceNode*> ExecutionGraph::children(std::string_view call_id) const {
  std::vector<const TraceNode*> out;
  for (const auto& n : nodes)
    if (n.parent_call_id && *n.parent_call_id == call_id) out.push_back(&n);
  return out;
}

std::vector<std::string> ExecutionGraph::subtree(std::string_view call_id) const {
  std::vector<std::string> out{std::string(call_id)};
  for (std::size_t i = 0; i < out.size(); ++i)
    for (const auto* child : children(out[i])) out.push_back(child->call_id);
  return out;
}

ExecutionGraph build_graph(const std::vector<TraceEvent>& events) {
  ExecutionGraph graph;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& e : events) {
    if (graph.trace_id.empty()) {
      graph.trace_id = e.trace_id;
      graph.version_id = e.version_id;
    }
    auto [it, inserted] = index.emplace(e.call_id, graph.nodes.size());
    if (inserted) {
      TraceNode n;
      n.call_id = e.call_id;
      n.parent_call_id = e.parent_call_id;
      n.name = e.node;
      n.kind = e.node_kind;
      n.start_ms = e.ts_ms;
      n.first_seq = e.seq;
      graph.nodes.push_back(std::move(n));
    }
    auto& n = graph.nodes[it->second];
    n.end_ms = std::max(n.end_ms, e.ts_ms);
    n.start_ms = std::min(n.start_ms, e.ts_ms);
    n.last_seq = e.seq;
    if (e.phase != Phase::After) continue;
    if (e.stage == LifecycleStage::PreSaveData) {
      n.input = e.payload.value("input", Json());
      n.caller = e.payload.value("caller", "");
      if (const auto& g = e.payload.value("group_id", Json()); g.is_string()) n.group_id = g;
    } else if (e.stage == LifecycleStage::Execute && e.payload.contains("react")) {
      n.react = e.payload["react"];
    } else if (e.stage == LifecycleStage::FormatOutput) {
      n.status = e.payload.value("status", "Ok") == "Ok" ? NodeStatus::Ok : NodeStatus::Error;
      n.output = e.payload.value("output", Json());
      if (const auto& err = e.payload.value("error", Json()); err.is_string()) n.error = err;
    }
  }
  for (auto& n : graph.nodes) {
    if (n.caller.empty() && n.parent_call_id) {
      if (auto it = index.find(*n.parent_call_id); it != index.end())
        n.caller = graph.nodes[it->second].name;
    }
    if (n.parent_call_id && index.contains(*n.parent_call_id))
      graph.edges.emplace_back(*n.parent_call_id, n.call_id);
  }
  return graph;
}

ExecutionGraph assemble_graph(const TraceStore& store, const std::string& trace_id,
                              const std::optional<std::string>& version_id) {
  const auto version = version_id.value_or(store.root_version(trace_id));
  auto graph = build_graph(store.events(trace_id, version));
  const auto meta = store.version(trace_id, version);
  graph.trace_id = trace_id;
  graph.version_id = meta.version_id;
  graph.parent_version = meta.parent_version;
  return graph;
}

Json to_json(const ExecutionGraph& graph) {
  Json nodes = Json::array();
  for (const auto& n : graph.nodes) {
    Json j{{"call_id", n.call_id},
           {"parent_call_id", n.parent_call_id ? Json(*n.parent_call_id) : Json()},
           {"caller", n.caller},
           {"name", n.name},
           {"kind", to_string(n.kind)},
           {"status", to_string(n.status)},
           {"start_ms", n.start_ms},
           {"end_ms", n.end_ms},
           {"duration_ms", n.duration_ms()},
           {"first_seq", n.first_seq},
           {"last_seq", n.last_seq},
           {"input", n.input},
           {"output", n.output}};
    if (n.error) j["error"] = *n.error;
    if (!n.react.is_null()) j["react"] = n.react;
    nodes.push_back(std::move(j));
  }
  Json edges = Json::array();
  for (const auto& [from, to] : graph.edges) edges.push_back({{"from", from}, {"to", to}});
  return Json{{"trace_id", graph.trace_id},
              {"version_id", graph.version_id},
              {"parent_version", graph.parent_version ? Json(*graph.parent_version) : Json()},
              {"nodes", nodes},
              {"edges", edges}};
}

NameView name_view(const ExecutionGraph& graph) {
  NameView view;
  std::set<std::string> names;
  std::set<std::pair<std::string, std::string>> edges;
  for (const auto& n : graph.nodes)
    if (names.insert(n.name).second) view.names.push_back(n.name);
  for (const auto& [from, to] : graph.edges) {
    std::pair<std::string, std::string> named{graph.node(from)->name, graph.node(to)->name};
    if (edges.insert(named).second) view.edges.push_back(named);
  }
  return view;
}

namespace {

Json normalize_from(const ExecutionGraph& graph, const TraceNode& start) {
  Json nodes = Json::array();
  std::function<void(const TraceNode&, Json)> visit = [&](const TraceNode& n, Json parent) {
    const auto idx = nodes.size();
    Json j{{"index", idx},
           {"parent", parent},
           {"name", n.name},
           {"kind", to_string(n.kind)},
           {"status", to_string(n.status)},
           {"input", n.input},
           {"output", n.output}};
    if (n.error) j["error"] = *n.error;
    nodes.push_back(std::move(j));
    auto kids = graph.children(n.call_id);
    std::sort(kids.begin(), kids.end(),
              [](const TraceNode* a, const TraceNode* b) { return a->first_seq < b->first_seq; });
    for (const auto* child : kids) visit(*child, Json(idx));
  };
  visit(start, Json());
  return nodes;
}

}  // namespace

Json normalize(const ExecutionGraph& graph) {
  const auto* root = graph.root();
  return root ? normalize_from(graph, *root) : Json::array();
}

Json normalize_subtree(const ExecutionGraph& graph, std::string_view call_id) {
  const auto* start = graph.node(call_id);
  if (!start) throw Error(Errc::UnknownCall, "unknown call " + std::string(call_id));
  return normalize_from(graph, *start);
}

namespace {
std::string dot_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}
}  // namespace

std::string export_dot(const ExecutionGraph& graph) {
  std::ostringstream out;
  out << "// execution graph trace=" << graph.trace_id << " version=" << graph.version_id << '\n';
  if (graph.nodes.empty()) {
    out << "digraph trace {}\n";
    return out.str();
  }
  std::vector<const TraceNode*> nodes;
  for (const auto& n : graph.nodes) nodes.push_back(&n);
  std::sort(nodes.begin(), nodes.end(),
            [](const TraceNode* a, const TraceNode* b) { return a->call_id < b->call_id; });
  auto id = [](const TraceNode& n) { return dot_escape(n.name + "_" + n.call_id); };
  out << "digraph trace {\n  rankdir=TB;\n";
  for (const auto* n : nodes) {
    char duration[32];
    std::snprintf(duration, sizeof duration, "%.1f", n->duration_ms());
    out << "  \"" << id(*n) << "\" [label=\"" << dot_escape(n->name) << " [" << to_string(n->kind)
        << "] " << to_string(n->status) << ' ' << duration << " ms\"];\n";
  }
  auto edges = graph.edges;
  std::sort(edges.begin(), edges.end());
  for (const auto& [from, to] : edges)
    out << "  \"" << id(*graph.node(from)) << "\" -> \"" << id(*graph.node(to)) << "\";\n";
  out << "}\n";
  return out.str();
}

Json to_json(const TimingBreakdown& t) {
  auto entry = [](const TimingEntry& e) {
    return Json{{"llm_ms", e.llm_ms},
                {"tool_ms", e.tool_ms},
                {"agent_ms", e.agent_ms},
                {"self_ms", e.self_ms},
                {"wall_ms", e.wall_ms}};
  };
  Json calls = Json::object(), nodes = Json::object();
  for (const auto& [id, e] : t.per_call) calls[id] = entry(e);
  for (const auto& [name, e] : t.per_node) nodes[name] = entry(e);
  return Json{{"root_call_id", t.root_call_id},
              {"root_wall_ms", t.root_wall_ms},
              {"per_call", calls},
              {"per_node", nodes}};
}

TimingBreakdown timing_of(const ExecutionGraph& graph) {
  TimingBreakdown report;
  for (const auto& n : graph.nodes) {
    TimingEntry entry;
    entry.wall_ms = n.duration_ms();
    double children = 0;
    for (const auto* child : graph.children(n.call_id)) {
      const double d = child->duration_ms();
      children += d;
      switch (child->kind) {
        case NodeKind::Llm: entry.llm_ms += d; break;
        case NodeKind::Tool: entry.tool_ms += d; break;
        case NodeKind::Agent:
        case NodeKind::Flow: entry.agent_ms += d; break;
      }
    }
    entry.self_ms = std::max(0.0, entry.wall_ms - children);
    report.per_call[n.call_id] = entry;
    auto& agg = report.per_node[n.name];
    agg.llm_ms += entry.llm_ms;
    agg.tool_ms += entry.tool_ms;
    agg.agent_ms += entry.agent_ms;
    agg.self_ms += entry.self_ms;
    agg.wall_ms += entry.wall_ms;
  }
  if (const auto* root = graph.root()) {
    report.root_call_id = root->call_id;
    report.root_wall_ms = root->duration_ms();
  }
  return report;
}

TimingBreakdown timing_report(const TraceStore& store, const std::string& trace_id,
                              const std::optional<std::string>& version_id) {
  const auto version = version_id.value_or(store.root_version(trace_id));
  if (!store.sealed(trace_id, version))
    throw Error(Errc::UnsealedTrace, "trace " + trace_id + " is still running");
  return timing_of(assemble_graph(store, trace_id, version));
}

Json trace_export(const TraceStore& store, const std::string& trace_id,
                  const std::string& version_id) {
  const auto graph = assemble_graph(store, trace_id, version_id);
  Json calls = Json::array();
  for (const auto& n : normalize(graph))
    calls.push_back(Json{{"node", n["name"]},
                         {"kind", n["kind"]},
                         {"input", n["input"]},
                         {"output", n["output"]},
                         {"status", n["status"]}});
  const auto meta = store.version(trace_id, version_id);
  std::string root_caller;
  if (meta.origin.contains("root_caller"))
    root_caller = meta.origin["root_caller"].get<std::string>();
  else if (const auto* root = graph.root())
    root_caller = root->caller;
  return Json{{"root_caller", root_caller}, {"calls", calls}};
}

}  // namespace oxy
