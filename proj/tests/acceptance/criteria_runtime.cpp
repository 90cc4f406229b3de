#include <atomic>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include "harness.hpp"
#include "oxy/core/runtime.hpp"
#include "oxy/planner/planner.hpp"
#include "oxy/tracer/graph.hpp"
#include "test_support.hpp"

namespace oxy::acceptance {
namespace {

using test::agent;
using test::llm;
using test::tool;

Json load_fixture(const std::string& name) {
  std::ifstream in(test::source_path("tests/fixtures/" + name));
  return Json::parse(in);
}

std::size_t count_denials(const Json& memory) {
  std::size_t n = 0;
  for (const auto& e : memory)
    if (e["type"] == "failure" && e["error"].get<std::string>().starts_with("permission denied"))
      ++n;
  return n;
}

void end_to_end(Check& check) {
  const auto fixture = load_fixture("file_assistant_time.json");
  auto rt = test::file_assistant();
  const auto run = rt->run({"master", Json{{"query", fixture["query"]}}});
  check.equal(run.response.output.dump(), fixture["answer"].dump(), "final answer");

  const auto graph = assemble_graph(rt->traces(), run.trace_id);
  std::multiset<std::tuple<std::string, std::string, std::string, std::string>> actual, expected;
  for (const auto& n : graph.nodes) {
    const auto* parent = n.parent_call_id ? graph.node(*n.parent_call_id) : nullptr;
    actual.emplace(n.name, to_string(n.kind), parent ? parent->name : "", n.output.dump());
  }
  for (const auto& c : fixture["calls"])
    expected.emplace(c["name"], c["kind"], c["parent"].is_null() ? "" : c["parent"].get<std::string>(),
                     c["output"].dump());
  check.expect(actual == expected, "call node multiset matches the fixture");

  std::multiset<std::pair<std::string, std::string>> edges, oracle;
  for (const auto& [from, to] : graph.edges) edges.emplace(graph.node(from)->name, graph.node(to)->name);
  for (const auto& e : fixture["edges"]) oracle.emplace(e[0], e[1]);
  check.expect(edges == oracle, "edge multiset matches the fixture");
  check.note(std::to_string(graph.nodes.size()) + " call nodes, " + std::to_string(graph.edges.size()) +
             " edges, " + std::to_string(name_view(graph).names.size()) + " distinct nodes");
}

// Follows a per-agent list of callees, one per round, then answers "done".
class PolicyModel final : public ModelClient {
 public:
  explicit PolicyModel(std::map<std::string, std::vector<std::string>> scripts)
      : scripts_(std::move(scripts)) {}

  std::string complete(std::span<const ChatMessage> messages) override {
    const auto& system = messages[0].content;
    const auto name = system.substr(8, system.find('.') - 8);  // "You are <name>."
    std::size_t round = 0;
    for (auto at = messages[1].content.find("\nAction: "); at != std::string::npos;
         at = messages[1].content.find("\nAction: ", at + 1))
      ++round;
    const auto& script = scripts_.at(name);
    if (round >= script.size()) return "done";
    return Json{{"tool_name", script[round]}, {"arguments", {{"query", "sub"}}}}.dump();
  }

 private:
  std::map<std::string, std::vector<std::string>> scripts_;
};

void permission_safety(Check& check) {
  std::size_t violations = 0, attempts_expected = 0, attempts_seen = 0, mismatched_calls = 0,
              edges_checked = 0;
  for (int iteration = 0; iteration < 500; ++iteration) {
    std::mt19937 rng(1000 + iteration);
    const int agents = 1 + static_cast<int>(rng() % 4);
    const int tools = 1 + static_cast<int>(rng() % 4);
    std::vector<std::string> tool_names, candidates;
    for (int t = 0; t < tools; ++t) tool_names.push_back("t" + std::to_string(t));

    Runtime rt;
    register_builtin_tools(rt);
    std::map<std::string, std::vector<std::string>> scripts;
    std::map<std::string, std::set<std::string>> permitted;
    for (const auto& t : tool_names) rt.register_node(tool(t, "constant", Json{{"value", t}}));
    for (int a = 0; a < agents; ++a) {
      const auto name = "a" + std::to_string(a);
      std::vector<std::string> pool = tool_names;
      for (int b = a + 1; b < agents; ++b) pool.push_back("a" + std::to_string(b));
      std::vector<std::string> callees;
      for (const auto& p : pool)
        if (rng() % 2) callees.push_back(p);
      permitted[name] = {callees.begin(), callees.end()};

      // Attempts may target anything: permitted nodes, other nodes, or names never registered.
      std::vector<std::string> universe = pool;
      for (int b = 0; b <= a; ++b) universe.push_back("a" + std::to_string(b));
      universe.push_back("ghost");
      universe.push_back(name + "_llm");
      auto& script = scripts[name];
      const int steps = static_cast<int>(rng() % 4);
      for (int s = 0; s < steps; ++s) script.push_back(universe[rng() % universe.size()]);

      rt.register_node(llm(name + "_llm", "policy"));
      rt.register_node(agent(name, callees, name + "_llm", "You are " + name + "."));
    }
    rt.models().add("policy", std::make_shared<PolicyModel>(scripts));
    const auto run = rt.run({"a0", Json{{"query", "go"}}});

    std::map<std::string, OxySpec> snapshot;
    for (const auto& j : rt.traces().registry_snapshot(run.trace_id)) {
      auto spec = spec_from_json(j);
      snapshot.emplace(spec.name, std::move(spec));
    }
    const auto graph = assemble_graph(rt.traces(), run.trace_id);
    for (const auto& [from, to] : graph.edges) {
      const auto& caller = snapshot.at(graph.node(from)->name);
      const auto& callee = graph.node(to)->name;
      const auto& list = caller.permitted_callees;
      const bool own_llm = caller.config.value("llm", "") == callee;
      if (!own_llm && std::find(list.begin(), list.end(), callee) == list.end()) ++violations;
      ++edges_checked;
    }
    for (const auto& n : graph.nodes) {
      if (n.kind != NodeKind::Agent) continue;
      std::size_t expected = 0;
      for (const auto& target : scripts[n.name]) expected += permitted[n.name].contains(target) ? 0 : 1;
      const auto seen = count_denials(n.react.value("memory", Json::array()));
      attempts_expected += expected;
      attempts_seen += seen;
      if (seen != expected) ++mismatched_calls;
    }
  }
  check.equal(violations, 0u, "executed edges outside permitted_callees");
  check.equal(mismatched_calls, 0u, "agent calls whose denials differ from their unauthorized attempts");
  check.equal(attempts_seen, attempts_expected, "FailureObservations for unauthorized attempts");
  check.note(std::to_string(edges_checked) + " executed edges checked, " +
             std::to_string(attempts_expected) + " unauthorized attempts");
}

void replanning(Check& check) {
  Runtime rt;
  register_builtin_tools(rt);
  rt.register_node(tool("good", "constant", Json{{"value", "ok!"}}));
  rt.register_node(tool("forbidden", "constant", Json{{"value", "secret"}}));
  rt.register_node(llm("master_llm", "deny_then_allow"));
  rt.register_node(agent("master", {"good"}, "master_llm", "You are master."));
  test::scripted(rt, "deny_then_allow", Json::parse(R"({"rules":[
    {"regex": "Observation from good: (.*)\\n", "reply": "$1"},
    {"match": "Failure from forbidden", "reply": "{\"tool_name\":\"good\",\"arguments\":{}}"}
  ], "default_reply": "{\"tool_name\":\"forbidden\",\"arguments\":{}}"})"));
  const auto run = rt.run({"master", Json{{"query", "go"}}});
  check.expect(run.response.ok(), "status Ok");
  check.equal(run.response.output.dump(), std::string("\"ok!\""), "answer");
  const auto graph = assemble_graph(rt.traces(), run.trace_id);
  const auto& react = graph.root()->react;
  check.equal(react.value("rounds", -1), 2, "planning rounds");
  std::size_t failures = 0;
  for (const auto& e : react["memory"]) failures += e["type"] == "failure" ? 1 : 0;
  check.equal(failures, 1u, "FailureObservations");
}

void lifecycle_order(Check& check) {
  const auto fixture = load_fixture("file_assistant_time.json");
  auto rt = test::file_assistant();
  std::mutex mutex;
  std::map<std::string, std::vector<std::pair<LifecycleStage, Phase>>> observed;
  for (auto stage : kAllStages)
    for (auto phase : {Phase::Before, Phase::After})
      rt->aspects().add(Aspect{"", stage, phase, select_all(), [&](JoinpointContext& ctx) {
                                 std::lock_guard lock(mutex);
                                 observed[ctx.call_id].emplace_back(ctx.stage, ctx.phase);
                               }});
  const auto run = rt->run({"master", Json{{"query", fixture["query"]}}});
  std::vector<std::pair<LifecycleStage, Phase>> pattern;
  for (auto stage : kAllStages)
    for (auto phase : {Phase::Before, Phase::After}) pattern.emplace_back(stage, phase);

  const auto graph = assemble_graph(rt->traces(), run.trace_id);
  check.equal(observed.size(), graph.nodes.size(), "calls observed by the aspect");
  for (const auto& [call, sequence] : observed)
    check.expect(sequence == pattern, "ten-event pattern for call " + call);

  std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> seqs;  // presave-after, execute-before
  for (const auto& e : rt->traces().events(run.trace_id, run.version_id)) {
    if (e.stage == LifecycleStage::PreSaveData && e.phase == Phase::After) seqs[e.call_id].first = e.seq;
    if (e.stage == LifecycleStage::Execute && e.phase == Phase::Before) seqs[e.call_id].second = e.seq;
  }
  for (const auto& [call, s] : seqs) check.expect(s.first < s.second, "PreSaveData before Execute for " + call);
  check.equal(seqs.size(), graph.nodes.size(), "calls with both events");
}

void scope_isolation(Check& check) {
  Runtime rt;
  std::atomic<long> cross_request{0}, cross_group{0}, app_inconsistent{0}, writes{0};
  rt.register_tool_handler("scoped_writer", [&](ToolContext& ctx) {
    auto& req = ctx.request;
    const auto group = *req.group_id;
    for (int i = 0; i < 100; ++i) {
      req.scopes->set(req, ScopeLevel::Request, "k", Json{{"req", req.request_id}, {"i", i}});
      req.set_shared_data("g", Json{{"group", group}, {"req", req.request_id}, {"i", i}});
      writes += 2;
      const auto mine = req.scopes->get(req, ScopeLevel::Request, "k");
      if (!mine || (*mine)["req"] != req.request_id || (*mine)["i"] != i) ++cross_request;
      const auto shared = req.shared_data("g");
      if (!shared || (*shared)["group"] != group) ++cross_group;
      if (req.global_data("config") != Json("v1")) ++app_inconsistent;
    }
    return Json(true);
  });
  rt.register_node(tool("scoped_writer", "scoped_writer"));
  OxyRequest seed;
  seed.scopes = &rt.scopes();
  seed.set_global_data("config", "v1");

  long failed_runs = 0;
  for (int repeat = 0; repeat < 50; ++repeat) {
    std::vector<std::thread> threads;
    for (int t = 0; t < 32; ++t)
      threads.emplace_back([&, t] {
        RunOptions options{"scoped_writer", Json::object(), "group-" + std::to_string(t % 4)};
        if (!rt.run(options).response.ok()) ++failed_runs;
      });
    for (auto& th : threads) th.join();
  }
  check.equal(cross_request.load(), 0L, "cross-request reads");
  check.equal(cross_group.load(), 0L, "cross-group reads");
  check.equal(app_inconsistent.load(), 0L, "inconsistent application reads");
  check.equal(failed_runs, 0L, "failed runs");
  check.note(std::to_string(writes.load()) + " scoped writes");
}

}  // namespace

std::vector<Criterion> runtime_criteria() {
  return {
      {1, "end-to-end scripted file/time assistant", 2.0, end_to_end},
      {2, "permission safety over 500 random topologies", 60.0, permission_safety},
      {3, "deny-then-allow replanning", 0, replanning},
      {4, "lifecycle order of every call", 0, lifecycle_order},
      {5, "scope isolation under concurrency (50 repeats)", 0, scope_isolation},
  };
}

}  // namespace oxy::acceptance
