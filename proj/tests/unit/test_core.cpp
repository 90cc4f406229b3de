#include <doctest.h>

#include <algorithm>
#include <random>
#include <thread>

#include "oxy/core/config.hpp"
#include "oxy/core/runtime.hpp"
#include "oxy/error.hpp"
#include "oxy/tools/builtin.hpp"
#include "oxy/tracer/graph.hpp"
#include "test_support.hpp"

using namespace oxy;
using oxy::test::agent;
using oxy::test::llm;
using oxy::test::tool;

namespace {

std::vector<std::string> joinpoints(const TraceStore& store, const std::string& trace_id,
                                    const std::string& call_id) {
  std::vector<std::string> out;
  for (const auto& e : store.events(trace_id, store.root_version(trace_id)))
    if (e.call_id == call_id)
      out.push_back(std::string(e.phase == Phase::Before ? "B:" : "A:") +
                    std::string(to_string(e.stage)));
  return out;
}

const std::vector<std::string> kTenEvents = {
    "B:PreProcess", "A:PreProcess", "B:PreSaveData", "A:PreSaveData", "B:Execute",
    "A:Execute",    "B:PostProcess", "A:PostProcess", "B:FormatOutput", "A:FormatOutput"};

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected oxy::Error");
  return Errc::IoError;
}

}  // namespace

TEST_CASE("node kind and stage names round-trip") {
  for (auto kind : {NodeKind::Agent, NodeKind::Tool, NodeKind::Llm, NodeKind::Flow})
    CHECK(parse_node_kind(to_string(kind)) == kind);
  for (auto stage : kAllStages) CHECK(parse_stage(to_string(stage)) == stage);
  CHECK_FALSE(parse_node_kind("robot").has_value());
  CHECK(std::is_sorted(kAllStages.begin(), kAllStages.end()));
}

TEST_CASE("spec JSON round-trip preserves callee order") {
  OxySpec spec{"master", NodeKind::Agent, "routes", {"z", "a", "m"}, Json{{"llm", "x"}}};
  CHECK(spec_from_json(to_json(spec)) == spec);
}

TEST_CASE("registry registration and resolution") {
  Registry registry;
  OxySpec time_tool{"time_tool", NodeKind::Tool, "clock", {}, Json::object()};
  registry.register_node(time_tool);
  CHECK(registry.resolve("time_tool") == time_tool);

  SUBCASE("duplicate name is a conflict and keeps the original") {
    OxySpec other = time_tool;
    other.description = "other";
    CHECK(code_of([&] { registry.register_node(other); }) == Errc::NameConflict);
    CHECK(registry.resolve("time_tool").description == "clock");
  }
  SUBCASE("missing node") {
    CHECK(code_of([&] { (void)registry.resolve("missing"); }) == Errc::NodeNotFound);
  }
  SUBCASE("invalid specs") {
    CHECK(code_of([&] { registry.register_node(OxySpec{"", NodeKind::Tool, "", {}, {}}); }) ==
          Errc::InvalidSpec);
    CHECK(code_of([&] {
            registry.register_node(OxySpec{"leaf", NodeKind::Llm, "", {"x"}, Json::object()});
          }) == Errc::InvalidSpec);
  }
  SUBCASE("dangling permissions are accepted at registration") {
    registry.register_node(OxySpec{"a", NodeKind::Agent, "", {"ghost"}, Json::object()});
    CHECK(registry.contains("a"));
  }
}

TEST_CASE("validate_topology") {
  std::vector<std::string> entry{"master"};
  SUBCASE("clean") {
    std::vector<OxySpec> specs{
        OxySpec{"master", NodeKind::Agent, "", {"file_agent"}, {}},
        OxySpec{"file_agent", NodeKind::Agent, "", {"read_file"}, {}},
        OxySpec{"read_file", NodeKind::Tool, "", {}, {}}};
    CHECK(validate_topology(specs, entry).empty());
  }
  SUBCASE("dangling permission") {
    std::vector<OxySpec> specs{OxySpec{"master", NodeKind::Agent, "", {"ghost"}, {}}};
    auto issues = validate_topology(specs, entry);
    REQUIRE(issues.size() == 1);
    CHECK(issues[0] == TopologyIssue{IssueKind::DanglingPermission, Severity::Error, "master", "ghost"});
  }
  SUBCASE("unreachable node") {
    std::vector<OxySpec> specs{OxySpec{"master", NodeKind::Agent, "", {}, {}},
                               OxySpec{"orphan_tool", NodeKind::Tool, "", {}, {}}};
    auto issues = validate_topology(specs, entry);
    REQUIRE(issues.size() == 1);
    CHECK(issues[0].kind == IssueKind::UnreachableNode);
    CHECK(issues[0].node == "orphan_tool");
  }
  SUBCASE("leaf with permissions") {
    std::vector<OxySpec> specs{OxySpec{"master", NodeKind::Agent, "", {"t"}, {}},
                               OxySpec{"t", NodeKind::Tool, "", {"master"}, {}}};
    auto issues = validate_topology(specs, entry);
    CHECK(std::any_of(issues.begin(), issues.end(), [](const TopologyIssue& i) {
      return i.kind == IssueKind::LeafWithPermissions && i.node == "t";
    }));
  }
  SUBCASE("agent cycles are informational") {
    std::vector<OxySpec> specs{OxySpec{"master", NodeKind::Agent, "", {"b"}, {}},
                               OxySpec{"b", NodeKind::Agent, "", {"master"}, {}}};
    auto issues = validate_topology(specs, entry);
    REQUIRE_FALSE(issues.empty());
    for (const auto& i : issues) {
      CHECK(i.kind == IssueKind::Cycle);
      CHECK(i.severity == Severity::Info);
    }
  }
  SUBCASE("agent llm counts as an edge") {
    std::vector<OxySpec> specs{agent("master", {}, "master_llm", ""), llm("master_llm", "m")};
    CHECK(validate_topology(specs, entry).empty());
  }
}

TEST_CASE("validate_topology is independent of registration order") {
  std::mt19937 rng(7);
  for (int round = 0; round < 50; ++round) {
    std::vector<OxySpec> specs;
    const int n = 3 + static_cast<int>(rng() % 6);
    for (int i = 0; i < n; ++i) {
      OxySpec s{"n" + std::to_string(i), rng() % 2 ? NodeKind::Agent : NodeKind::Tool, "", {}, {}};
      if (s.kind == NodeKind::Agent)
        for (int k = 0; k < 3; ++k)
          if (rng() % 2) s.permitted_callees.push_back("n" + std::to_string(rng() % (n + 2)));
      specs.push_back(s);
    }
    std::vector<std::string> entry{"n0"};
    const auto expected = validate_topology(specs, entry);
    CHECK(std::is_sorted(expected.begin(), expected.end(),
                         [](const auto& a, const auto& b) { return a.node < b.node; }));
    for (int shuffle = 0; shuffle < 5; ++shuffle) {
      std::shuffle(specs.begin(), specs.end(), rng);
      Registry registry;
      for (const auto& s : specs) registry.register_node(s);
      CHECK(validate_topology(registry, entry) == expected);
    }
  }
}

TEST_CASE("lifecycle fires the ten joinpoints in order") {
  Runtime runtime;
  register_builtin_tools(runtime);
  runtime.register_node(tool("echo_tool", "echo"));
  std::vector<std::string> seen;
  std::mutex m;
  for (auto stage : kAllStages)
    for (auto phase : {Phase::Before, Phase::After})
      runtime.aspects().add(Aspect{"", stage, phase, select_all(), [&](JoinpointContext& ctx) {
                                     std::lock_guard lock(m);
                                     seen.push_back(std::string(ctx.phase == Phase::Before ? "B:" : "A:") +
                                                    std::string(to_string(ctx.stage)));
                                   }});
  auto run = runtime.run({"echo_tool", Json{{"x", 1}}});
  CHECK(run.response.ok());
  CHECK(run.response.output == Json{{"x", 1}});
  CHECK(seen == kTenEvents);
  const auto graph = assemble_graph(runtime.traces(), run.trace_id);
  CHECK(joinpoints(runtime.traces(), run.trace_id, graph.root()->call_id) == kTenEvents);
  for (auto stage : kAllStages) CHECK(run.response.timing.contains(std::string(to_string(stage))));
}

TEST_CASE("Execute failure skips PostProcess and formats an error envelope") {
  Runtime runtime;
  register_builtin_tools(runtime);
  runtime.register_node(tool("broken", "fail", Json{{"message", "disk on fire"}}));
  auto run = runtime.run({"broken"});
  CHECK(run.response.status == Status::Error);
  REQUIRE(run.response.error_detail);
  CHECK(run.response.error_detail->find("disk on fire") != std::string::npos);
  CHECK(run.response.output.contains("error"));
  const auto root = assemble_graph(runtime.traces(), run.trace_id).root()->call_id;
  CHECK(joinpoints(runtime.traces(), run.trace_id, root) ==
        std::vector<std::string>{"B:PreProcess", "A:PreProcess", "B:PreSaveData", "A:PreSaveData",
                                 "B:Execute", "A:Execute", "B:FormatOutput", "A:FormatOutput"});
}

TEST_CASE("unknown callee and missing handler are failures, not exceptions") {
  Runtime runtime;
  CHECK(runtime.call(OxyRequest{.callee = "nobody"}).status == Status::Error);
  runtime.register_node(tool("t", "no_such_handler"));
  auto r = runtime.run({"t"});
  CHECK(r.response.status == Status::Error);
  CHECK(r.response.error_detail->find("no_such_handler") != std::string::npos);
}

TEST_CASE("aspects") {
  Runtime runtime;
  register_builtin_tools(runtime);
  runtime.register_node(tool("echo_tool", "echo"));
  oxy::test::scripted(runtime, "m", Json{{"rules", Json::array()}, {"default_reply", "done"}});
  runtime.register_node(agent("boss", {"echo_tool"}, "boss_llm", "You are boss."));
  runtime.register_node(llm("boss_llm", "m"));

  SUBCASE("kind selector stays silent on other kinds") {
    int hits = 0;
    runtime.aspects().add(Aspect{"", LifecycleStage::Execute, Phase::Before, select_kind(NodeKind::Tool),
                                 [&](JoinpointContext&) { ++hits; }});
    runtime.run({"boss", Json{{"query", "hi"}}});
    CHECK(hits == 0);
    runtime.run({"echo_tool"});
    CHECK(hits == 1);
  }
  SUBCASE("registration order within a joinpoint") {
    std::vector<int> order;
    for (int i = 0; i < 3; ++i)
      runtime.aspects().add(Aspect{"", LifecycleStage::Execute, Phase::Before, select_all(),
                                   [&order, i](JoinpointContext&) { order.push_back(i); }});
    runtime.run({"echo_tool"});
    CHECK(order == std::vector<int>{0, 1, 2});
  }
  SUBCASE("mutations are ignored, annotations reach the trace") {
    runtime.aspects().add(Aspect{"meddler", LifecycleStage::PreSaveData, Phase::Before, select_all(),
                                 [](JoinpointContext& ctx) {
                                   ctx.arguments["x"] = 999;
                                   ctx.annotations["seen"] = true;
                                 }});
    runtime.aspects().add(Aspect{"rewriter", LifecycleStage::FormatOutput, Phase::After, select_all(),
                                 [](JoinpointContext& ctx) { ctx.output = "hijacked"; }});
    auto run = runtime.run({"echo_tool", Json{{"x", 1}}});
    CHECK(run.response.output == Json{{"x", 1}});
    bool annotated = false;
    for (const auto& e : runtime.traces().events(run.trace_id, run.version_id))
      if (e.payload.contains("annotations"))
        annotated = e.payload["annotations"]["meddler"]["seen"] == true;
    CHECK(annotated);
  }
  SUBCASE("a throwing handler does not break the call") {
    runtime.aspects().add(Aspect{"bad", LifecycleStage::Execute, Phase::Before, select_all(),
                                 [](JoinpointContext&) { throw std::runtime_error("boom"); }});
    auto run = runtime.run({"echo_tool", Json{{"x", 2}}});
    CHECK(run.response.ok());
  }
  SUBCASE("invalid selector") {
    CHECK(code_of([&] {
            runtime.aspects().add(Aspect{"", LifecycleStage::Execute, Phase::Before, nullptr,
                                         [](JoinpointContext&) {}});
          }) == Errc::InvalidSelector);
  }
  SUBCASE("removal") {
    int hits = 0;
    auto id = runtime.aspects().add(Aspect{"", LifecycleStage::Execute, Phase::Before, select_all(),
                                           [&](JoinpointContext&) { ++hits; }});
    CHECK(runtime.aspects().remove(id));
    runtime.run({"echo_tool"});
    CHECK(hits == 0);
  }
}

TEST_CASE("aspect transparency over random aspect sets") {
  std::mt19937 rng(42);
  const std::vector<std::string> queries{"what time is it", "read notes.txt", "list files", "hello"};
  std::vector<Json> baseline;
  {
    auto runtime = oxy::test::file_assistant();
    for (const auto& q : queries) baseline.push_back(runtime->run({"master", Json{{"query", q}}}).response.output);
  }
  for (int round = 0; round < 20; ++round) {
    auto runtime = oxy::test::file_assistant();
    const int count = 1 + static_cast<int>(rng() % 8);
    for (int i = 0; i < count; ++i) {
      const auto stage = kAllStages[rng() % kAllStages.size()];
      const auto phase = rng() % 2 ? Phase::Before : Phase::After;
      const int flavour = static_cast<int>(rng() % 3);
      runtime->aspects().add(Aspect{"", stage, phase, rng() % 2 ? select_all() : select_kind(NodeKind::Llm),
                                    [flavour](JoinpointContext& ctx) {
                                      if (flavour == 0) ctx.arguments = Json("clobbered");
                                      if (flavour == 1) ctx.output = Json::array();
                                      if (flavour == 2) throw std::runtime_error("noise");
                                      ctx.annotations["n"] = 1;
                                    }});
    }
    for (std::size_t i = 0; i < queries.size(); ++i)
      CHECK(runtime->run({"master", Json{{"query", queries[i]}}}).response.output == baseline[i]);
  }
}

TEST_CASE("pre-save snapshot precedes Execute and callee never sits in arguments") {
  auto runtime = oxy::test::file_assistant();
  auto run = runtime->run({"master", Json{{"query", "what time is it"}, {"callee", "x"}}});
  std::map<std::string, std::uint64_t> saved, executed;
  for (const auto& e : runtime->traces().events(run.trace_id, run.version_id)) {
    if (e.stage == LifecycleStage::PreSaveData && e.phase == Phase::After) {
      saved[e.call_id] = e.seq;
      CHECK_FALSE(e.payload["input"].contains("callee"));
      CHECK(e.payload["call_chain"].back() == e.payload["caller"]);
    }
    if (e.stage == LifecycleStage::Execute && e.phase == Phase::Before) executed[e.call_id] = e.seq;
  }
  REQUIRE(saved.size() == 7);
  for (const auto& [call, seq] : executed) CHECK(saved.at(call) < seq);
}

TEST_CASE("max call depth bounds recursive delegation") {
  Runtime runtime;
  runtime.set_settings({.max_call_depth = 4});
  oxy::test::scripted(runtime, "m", Json{{"rules", {{{"match", "You are loop"}, {"reply", R"({"tool_name":"loop"})"}}}}});
  runtime.register_node(agent("loop", {"loop"}, "loop_llm", "You are loop.", Json{{"fail_streak_limit", 1}}));
  runtime.register_node(llm("loop_llm", "m"));
  auto run = runtime.run({"loop", Json{{"query", "go"}}});
  CHECK(run.response.status == Status::Error);
  std::size_t deepest = 0;
  for (const auto& e : runtime.traces().events(run.trace_id, run.version_id))
    if (e.stage == LifecycleStage::PreSaveData && e.phase == Phase::After)
      deepest = std::max(deepest, e.payload["call_chain"].size());
  CHECK(deepest <= 4);
  bool reported = false;
  for (const auto& e : runtime.traces().events(run.trace_id, run.version_id))
    reported = reported || e.payload.dump().find("max call depth 4 exceeded") != std::string::npos;
  CHECK(reported);
}

TEST_CASE("flow plans substitute $input and $prev") {
  Runtime runtime;
  register_builtin_tools(runtime);
  runtime.register_node(tool("calc", "calculator"));
  runtime.register_node(tool("echo_tool", "echo"));
  runtime.register_node(OxySpec{"pipeline", NodeKind::Flow, "", {"calc", "echo_tool"},
                                Json{{"plan", Json::array({
                                                  Json{{"callee", "calc"}, {"arguments", {{"expression", "$input.expr"}}}},
                                                  Json{{"callee", "echo_tool"}, {"arguments", {{"value", "$prev"}}}},
                                              })}}});
  auto run = runtime.run({"pipeline", Json{{"expr", "6*7"}}});
  INFO(run.response.output.dump());
  REQUIRE(run.response.ok());
  CHECK(run.response.output == Json{{"value", 42}});

  SUBCASE("steps outside the permitted list are refused") {
    runtime.register_node(OxySpec{"sneaky", NodeKind::Flow, "", {},
                                  Json{{"plan", Json::array({Json{{"callee", "calc"}}})}}});
    auto denied = runtime.run({"sneaky"});
    CHECK(denied.response.status == Status::Error);
    CHECK(denied.response.error_detail->find("permission denied: sneaky -> calc") != std::string::npos);
  }
}

TEST_CASE("fixed_flow planning runs the agent's static plan") {
  Runtime runtime;
  register_builtin_tools(runtime);
  runtime.register_node(tool("time_tool", "clock", Json{{"fixed", "12:00"}}));
  runtime.register_node(agent("timer", {"time_tool"}, "", "",
                              Json{{"fixed_plan", Json::array({Json{{"callee", "time_tool"}}})}}));
  runtime.set_settings({.planning_mode = PlanningMode::FixedFlow});
  auto run = runtime.run({"timer", Json{{"query", "time?"}}});
  CHECK(run.response.ok());
  CHECK(run.response.output == "12:00");
}

TEST_CASE("config loading") {
  const auto config = load_config(oxy::test::source_path("configs/file_assistant.json"));
  CHECK(config.entrypoint == "master");
  CHECK(config.nodes.size() == 9);
  const auto read_file = std::find_if(config.nodes.begin(), config.nodes.end(),
                                      [](const OxySpec& s) { return s.name == "read_file"; });
  REQUIRE(read_file != config.nodes.end());
  CHECK(std::filesystem::path(read_file->config["params"]["root"].get<std::string>()).is_absolute());

  CHECK(code_of([] { config_from_json(Json{{"settings", {{"planning_mode", "psychic"}}}}); }) ==
        Errc::ConfigError);
  CHECK(code_of([] { config_from_json(Json::array()); }) == Errc::ConfigError);
  CHECK(code_of([] { load_config("/nonexistent/config.json"); }) == Errc::ConfigError);
}

TEST_CASE("breakpoints pause a call until resumed with overrides") {
  Runtime runtime;
  register_builtin_tools(runtime);
  runtime.register_node(tool("echo_tool", "echo"));
  runtime.breakpoints().add("echo_tool", LifecycleStage::Execute);
  RunResult result;
  std::thread worker([&] { result = runtime.run({"echo_tool", Json{{"x", 1}}}); });
  std::vector<PausedCall> paused;
  for (int i = 0; i < 500 && paused.empty(); ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
    paused = runtime.breakpoints().paused();
  }
  REQUIRE(paused.size() == 1);
  CHECK(paused[0].node == "echo_tool");
  CHECK(paused[0].stage == LifecycleStage::Execute);
  CHECK_FALSE(runtime.breakpoints().resume("no-such-call"));
  CHECK(runtime.breakpoints().resume(paused[0].call_id, CallOverrides{Json{{"x", 2}}, {}, {}}));
  worker.join();
  CHECK(result.response.output == Json{{"x", 2}});

  SUBCASE("timeout lets the call continue") {
    runtime.breakpoints().set_timeout(std::chrono::milliseconds(20));
    auto r = runtime.run({"echo_tool", Json{{"x", 3}}});
    CHECK(r.response.output == Json{{"x", 3}});
  }
}

TEST_CASE("hot registration while serving") {
  auto runtime = oxy::test::file_assistant();
  std::atomic<bool> stop{false};
  std::thread reader([&] {
    while (!stop) CHECK(runtime->run({"master", Json{{"query", "what time is it"}}}).response.output == "12:00");
  });
  for (int i = 0; i < 50; ++i) runtime->register_node(tool("extra_" + std::to_string(i), "echo"));
  stop = true;
  reader.join();
  CHECK(runtime->registry().contains("extra_49"));
}
