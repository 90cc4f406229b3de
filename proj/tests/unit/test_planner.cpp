#include <doctest.h>

#include "oxy/core/runtime.hpp"
#include "oxy/error.hpp"
#include "oxy/planner/planner.hpp"
#include "test_support.hpp"

using namespace oxy;
using oxy::test::agent;
using oxy::test::llm;
using oxy::test::tool;
using oxy::test::TempDir;

namespace {

const TraceNode& find_node(const ExecutionGraph& g, std::string_view name) {
  for (const auto& n : g.nodes)
    if (n.name == name) return n;
  FAIL("no node " << name);
  throw std::logic_error("unreachable");
}

std::size_t count_type(const Json& memory, std::string_view type) {
  std::size_t n = 0;
  for (const auto& e : memory) n += e["type"] == type ? 1 : 0;
  return n;
}

}  // namespace

TEST_CASE("parse_action picks the first valid tool_name object") {
  CHECK(parse_action(R"({"tool_name":"time_tool","arguments":{}})") ==
        ParseResult(CallAction{"time_tool", Json::object()}));
  CHECK(parse_action(R"(I will call {"tool_name":"a","arguments":{"x":1}} then {"tool_name":"b"})") ==
        ParseResult(CallAction{"a", Json{{"x", 1}}}));
  CHECK(parse_action(R"({"tool_name": 3} {"tool_name":"ok"})") == ParseResult(CallAction{"ok", Json::object()}));
  CHECK(parse_action(R"({"note":"}"} {"tool_name":"brace"})") == ParseResult(CallAction{"brace", Json::object()}));
  CHECK(parse_action("  The time is 12:00.\n") == ParseResult(FinalAnswer{"The time is 12:00."}));
  CHECK(parse_action("{not json") == ParseResult(FinalAnswer{"{not json"}));
}

TEST_CASE("parse_action fences") {
  CHECK(std::holds_alternative<ParseFailure>(parse_action("```json\n{\"tool_name\": \n```")));
  CHECK(std::holds_alternative<ParseFailure>(parse_action("```action\nnope\n```")));
  CHECK(parse_action("```json\n[1,2]\n```") == ParseResult(FinalAnswer{Json{1, 2}}));
  CHECK(parse_action("```python\nprint(1)\n```") == ParseResult(FinalAnswer{"```python\nprint(1)\n```"}));
}

TEST_CASE("parse_action never throws on arbitrary text") {
  std::mt19937 rng(7);
  const std::string alphabet = "{}[]\":,` \ntool_name json action ab12\\";
  for (int i = 0; i < 2000; ++i) {
    std::string text(rng() % 80, ' ');
    for (auto& c : text) c = alphabet[rng() % alphabet.size()];
    CHECK_NOTHROW((void)parse_action(text));
  }
}

TEST_CASE("authorize follows the permitted list") {
  Registry registry;
  registry.register_node(agent("master", {"time_agent"}, "llm", "p"));
  registry.register_node(agent("time_agent", {"time_tool"}, "llm", "p"));
  CHECK(authorize(registry, "master", "time_agent").allowed);
  auto denied = authorize(registry, "master", "time_tool");
  CHECK_FALSE(denied.allowed);
  CHECK(denied.reason == "permission denied: master -> time_tool");
  CHECK_THROWS_AS(authorize(registry, "ghost", "x"), Error);
}

TEST_CASE("encapsulate_failure appends and keeps earlier entries") {
  ReactMemory memory;
  memory.append(memory::UserQuery{"q"});
  encapsulate_failure("file_tool", "No such file", memory);
  REQUIRE(memory.size() == 2);
  const auto& f = std::get<memory::FailureObservation>(memory.entries()[1]);
  CHECK(f.node == "file_tool");
  CHECK(f.error == "No such file");
}

TEST_CASE("render_prompt layout") {
  Registry registry;
  registry.register_node(tool("time_tool", "clock", Json::object(), "current time"));
  auto master = agent("master", {"time_tool"}, "llm", "You are master.");
  ReactMemory memory;
  memory.append(memory::SystemPrompt{"You are master."});
  memory.append(memory::UserQuery{"what time?"});
  memory.append(memory::ActionTaken{CallAction{"time_tool", Json::object()}});
  memory.append(memory::Observation{"time_tool", "12:00"});
  memory.append(memory::FailureObservation{"x", "boom"});
  const auto messages = render_prompt(master, registry, memory);
  REQUIRE(messages.size() == 2);
  CHECK(messages[0].role == Role::System);
  CHECK(messages[0].content == "You are master.\n\nTools available:\ntime_tool: current time\n");
  CHECK(messages[1].content ==
        "User query: what time?\n"
        "Action: {\"arguments\":{},\"tool_name\":\"time_tool\"}\n"
        "Observation from time_tool: 12:00\n"
        "Failure from x: boom\n"
        "\n"
        "Reply with exactly one action as JSON {\"tool_name\": \"<name>\", \"arguments\": {...}} "
        "to call a tool, or with the final answer as plain text.");

  auto lonely = agent("lonely", {}, "llm", "Solo.");
  CHECK(render_prompt(lonely, registry, ReactMemory{})[0].content == "Solo.\n\nTools available:\n(none)\n");
}

TEST_CASE("long observations are clipped in the prompt only") {
  Registry registry;
  auto a = agent("a", {}, "llm", "p");
  ReactMemory memory;
  const std::string big(kObservationLimit + 100, 'z');
  memory.append(memory::Observation{"t", big});
  const auto text = render_prompt(a, registry, memory)[1].content;
  CHECK(text.find("... [truncated 100 bytes]") != std::string::npos);
  CHECK(text.find(std::string(kObservationLimit + 1, 'z')) == std::string::npos);
  CHECK(std::get<memory::Observation>(memory.entries()[0]).value == big);
}

TEST_CASE("plan_step retries unparseable output then gives up") {
  Registry registry;
  auto a = agent("a", {}, "llm", "p");
  ReactMemory memory;
  int calls = 0;
  ModelInvoker bad = [&](const std::vector<ChatMessage>&) {
    ++calls;
    return std::string("```json\n{oops\n```");
  };
  CHECK_THROWS_AS(plan_step(a, registry, memory, bad, 3), Error);
  CHECK(calls == 3);
  CHECK(memory.count<memory::FailureObservation>() == 3);
  CHECK(memory.count<memory::ModelThought>() == 3);

  ReactMemory second;
  int n = 0;
  ModelInvoker flaky = [&](const std::vector<ChatMessage>&) {
    return std::string(n++ == 0 ? "```action\n???\n```" : "done");
  };
  CHECK(plan_step(a, registry, second, flaky, 3) == ActionDecision(FinalAnswer{"done"}));
  CHECK(second.count<memory::FailureObservation>() == 1);
  CHECK(second.count<memory::ActionTaken>() == 1);
}

TEST_CASE("agent limits default and override") {
  auto a = agent("a", {}, "llm", "p");
  auto d = agent_limits(a);
  CHECK(d.max_react_rounds == 16);
  CHECK(d.retry_limit == 3);
  CHECK(d.fail_streak_limit == 3);
  auto b = agent("b", {}, "llm", "p", Json{{"max_react_rounds", 4}, {"fail_streak_limit", 1}});
  CHECK(agent_limits(b).max_react_rounds == 4);
  CHECK(agent_limits(b).fail_streak_limit == 1);
}

TEST_CASE("three-node time MAS") {
  TempDir dir;
  auto rt = oxy::test::file_assistant(std::make_shared<TraceStore>(dir.path()));
  auto run = rt->run({"master", Json{{"query", "what time is it?"}}});
  CHECK(run.response.output == "12:00");
  const auto graph = assemble_graph(rt->traces(), run.trace_id);
  const auto view = name_view(graph);
  using Edge = std::pair<std::string, std::string>;
  const std::set<Edge> edges(view.edges.begin(), view.edges.end());
  CHECK(edges == std::set<Edge>{{"master", "master_llm"},
                                {"master", "time_agent"},
                                {"time_agent", "time_agent_llm"},
                                {"time_agent", "time_tool"}});
  const auto& master = find_node(graph, "master");
  CHECK(master.react["rounds"] == 1);
  CHECK(master.react["plan_steps"] == 2);
}

TEST_CASE("deny-then-allow replans to success") {
  Runtime rt;
  register_builtin_tools(rt);
  rt.register_node(tool("good", "constant", Json{{"value", "ok!"}}));
  rt.register_node(tool("forbidden", "constant", Json{{"value", "secret"}}));
  rt.register_node(llm("master_llm", "deny_then_allow"));
  rt.register_node(agent("master", {"good"}, "master_llm", "You are master."));
  oxy::test::scripted(rt, "deny_then_allow", Json::parse(R"({"rules":[
    {"regex": "Observation from good: (.*)\\n", "reply": "$1"},
    {"match": "Failure from forbidden", "reply": "{\"tool_name\":\"good\",\"arguments\":{}}"}
  ], "default_reply": "{\"tool_name\":\"forbidden\",\"arguments\":{}}"})"));

  auto run = rt.run({"master", Json{{"query", "go"}}});
  REQUIRE(run.response.ok());
  CHECK(run.response.output == "ok!");
  const auto graph = assemble_graph(rt.traces(), run.trace_id);
  const auto& react = find_node(graph, "master").react;
  CHECK(react["rounds"] == 2);
  CHECK(count_type(react["memory"], "failure") == 1);
  CHECK(count_type(react["memory"], "observation") == 1);
  for (const auto& n : graph.nodes) CHECK(n.name != "forbidden");
}

TEST_CASE("an endlessly repeating call hits the round bound") {
  Runtime rt;
  register_builtin_tools(rt);
  rt.register_node(tool("t", "constant", Json{{"value", 1}}));
  rt.register_node(llm("l", "loop"));
  rt.register_node(agent("a", {"t"}, "l", "p", Json{{"max_react_rounds", 4}}));
  oxy::test::scripted(rt, "loop", Json{{"rules", Json::array()},
                                       {"default_reply", R"({"tool_name":"t","arguments":{}})"}});
  auto run = rt.run({"a", Json{{"query", "spin"}}});
  CHECK(run.response.status == Status::Error);
  REQUIRE(run.response.output["details"].contains("memory"));
  CHECK(count_type(run.response.output["details"]["memory"], "observation") == 4);
  const auto graph = assemble_graph(rt.traces(), run.trace_id);
  int tool_calls = 0;
  for (const auto& n : graph.nodes) tool_calls += n.name == "t" ? 1 : 0;
  CHECK(tool_calls == 4);
}

TEST_CASE("consecutive failures fail fast") {
  Runtime rt;
  register_builtin_tools(rt);
  rt.register_node(tool("broken", "fail", Json{{"message", "disk on fire"}}));
  rt.register_node(llm("l", "retry"));
  rt.register_node(agent("a", {"broken"}, "l", "p"));
  oxy::test::scripted(rt, "retry", Json{{"rules", Json::array()},
                                        {"default_reply", R"({"tool_name":"broken","arguments":{}})"}});
  auto run = rt.run({"a", Json{{"query", "x"}}});
  CHECK(run.response.status == Status::Error);
  CHECK(count_type(run.response.output["details"]["memory"], "failure") == 3);
  CHECK(run.response.output["error"].get<std::string>().find("3 consecutive failures") != std::string::npos);
}

TEST_CASE("an unavailable model becomes an error response") {
  Runtime rt;
  rt.register_node(llm("l", "nowhere"));
  rt.register_node(agent("a", {}, "l", "p"));
  auto run = rt.run({"a", Json{{"query", "x"}}});
  CHECK(run.response.status == Status::Error);
  CHECK(run.response.output["error"].get<std::string>().find("ModelUnavailable") != std::string::npos);
}

TEST_CASE("memory is append-only across a run") {
  TempDir dir;
  auto rt = oxy::test::file_assistant(std::make_shared<TraceStore>(dir.path()));
  auto run = rt->run({"master", Json{{"query", "read missing.txt"}}});
  const auto graph = assemble_graph(rt->traces(), run.trace_id);
  const auto& file_agent = find_node(graph, "file_agent");
  const auto& memory = file_agent.react["memory"];
  REQUIRE(memory.size() >= 2);
  CHECK(memory[0]["type"] == "system_prompt");
  CHECK(memory[1]["type"] == "user_query");
  CHECK(count_type(memory, "failure") >= 1);
}
