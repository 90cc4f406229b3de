#include <doctest.h>

#include <fstream>

#include "cli_runner.hpp"

using namespace oxy;
using oxy::test::CliResult;
using oxy::test::TempDir;

namespace {

struct Cli {
  TempDir dir;
  std::string config = oxy::test::source_path("configs/file_assistant.json").string();
  std::string templates = oxy::test::source_path("templates").string();

  CliResult operator()(std::vector<std::string> args, bool json = false) {
    std::vector<std::string> full{"--store", (dir / "store").string(), "--config", config,
                                  "--templates", templates};
    if (json) full.push_back("--json");
    full.insert(full.end(), args.begin(), args.end());
    return oxy::test::run_cli(full, dir);
  }
  Json json(std::vector<std::string> args) { return Json::parse((*this)(std::move(args), true).out); }
};

}  // namespace

TEST_CASE("usage errors exit 2") {
  Cli cli;
  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"chat"}).code == 2);
  CHECK(cli({"bank", "audit", "r1"}).code == 2);
  CHECK(cli({"bank", "audit", "r1", "--approve", "--reject"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
  cli.config = (cli.dir / "missing.json").string();
  auto r = cli({"chat", "-q", "hi"});
  CHECK(r.code == 2);
  CHECK(r.err.find("ConfigError") != std::string::npos);
}

TEST_CASE("chat prints the answer") {
  Cli cli;
  auto r = cli({"chat", "-q", "what time is it"});
  CHECK(r.code == 0);
  CHECK(r.out.starts_with("12:00\n"));
  auto j = cli.json({"chat", "-q", "read notes.txt"});
  CHECK(j["ok"] == true);
  CHECK(j["data"]["answer"] == "Quarterly review moved to Friday.");
}

TEST_CASE("trace inspection") {
  Cli cli;
  const std::string trace = cli.json({"chat", "-q", "what time is it"})["data"]["trace_id"];
  const auto list = cli.json({"trace", "list"});
  REQUIRE(list["data"]["traces"].size() == 1);
  CHECK(list["data"]["traces"][0]["trace_id"] == trace);

  const auto graph = cli.json({"trace", "show", trace});
  CHECK(graph["data"]["nodes"].size() == 7);
  auto dot = cli({"trace", "show", trace, "--dot"});
  CHECK(dot.code == 0);
  CHECK(dot.out.find("digraph trace {") != std::string::npos);
  CHECK(cli({"trace", "show", trace, "--timing"}).code == 0);
  CHECK(cli({"trace", "show", trace, "--events"}).code == 0);
  CHECK(cli({"trace", "show", trace, "--dot", "--timing"}).code == 2);
  auto missing = cli({"trace", "show", "nope"});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("UnknownTrace") != std::string::npos);

  std::string target;
  for (const auto& n : graph["data"]["nodes"])
    if (n["name"] == "time_tool") target = n["call_id"];
  auto regen = cli({"trace", "regenerate", trace, target, "--set", "arg.tz=UTC+8"});
  CHECK(regen.code == 0);
  const auto v2 = regen.out.substr(0, regen.out.find('\n'));
  CHECK(cli.json({"trace", "versions", trace})["data"]["versions"].size() == 2);
  CHECK(cli.json({"trace", "show", trace, "--version", v2})["data"]["parent_version"] ==
        graph["data"]["version_id"]);
  CHECK(cli({"trace", "regenerate", trace, target, "--set", "colour=blue"}).code == 2);
  CHECK(cli({"trace", "regenerate", trace, target, "--set", "model_binding=nope"}).code == 1);
}

TEST_CASE("bank workflow and gating exit codes") {
  Cli cli;
  const std::string trace = cli.json({"chat", "-q", "what time is it"})["data"]["trace_id"];
  const auto rec = cli.json({"bank", "deposit", trace});
  const std::string id = rec["data"]["record_id"];
  CHECK(cli.json({"bank", "deposit", trace})["data"]["occurrence_count"] == 2);

  auto denied = cli({"bank", "audit", id, "--approve"});
  CHECK(denied.code == 1);
  CHECK(denied.err.find("InvalidTransition") != std::string::npos);
  auto bad = cli({"bank", "annotate", id, "--field", "question=q"});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("TemplateViolation") != std::string::npos);
  CHECK(cli({"bank", "annotate", id, "--field", "question=what time is it", "--field", "answer=12:00",
             "--field-json", R"(tags=["time"])"}).code == 0);
  CHECK(cli({"bank", "audit", id, "--approve", "--note", "fine"}).code == 0);
  CHECK(cli.json({"bank", "show", id})["data"]["annotation"]["tags"] == Json{"time"});

  const auto out = cli.dir / "kb.jsonl";
  CHECK(cli({"bank", "export", "-o", out.string()}).code == 0);
  const auto text = oxy::test::slurp(out);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1);
  CHECK(Json::parse(text.substr(0, text.find('\n')))["sample_id"] == "ks-" + id);
  CHECK(cli.json({"bank", "list", "--state", "approved"})["data"]["records"].size() == 1);
  CHECK(cli({"bank", "list", "--state", "weird"}).code == 1);

  auto opt = cli.json({"prompt", "optimize", "time_agent"});
  CHECK(opt["data"]["version"] == 2);
  CHECK(cli({"prompt", "apply", "time_agent", "2"}).code == 0);
  const auto versions = cli.json({"prompt", "list", "time_agent"})["data"]["versions"];
  REQUIRE(versions.size() == 2);
  CHECK(versions[1]["applied"] == true);
  CHECK(cli({"prompt", "optimize", "file_agent"}).code == 1);
}

TEST_CASE("topology exit code reflects validation") {
  Cli cli;
  auto ok = cli({"topology"});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("master -> time_agent (permission)") != std::string::npos);

  std::ofstream(cli.dir / "dangling.json") << R"({"entrypoint":"a","nodes":[
    {"name":"a","kind":"agent","permitted_callees":["ghost"],"config":{"llm":"l","system_prompt":"p"}},
    {"name":"l","kind":"llm","config":{"binding":"none"}}]})";
  cli.config = (cli.dir / "dangling.json").string();
  auto bad = cli({"topology"});
  CHECK(bad.code == 1);
  CHECK(bad.out.find("ghost") != std::string::npos);
}
