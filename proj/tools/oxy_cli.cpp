#include <csignal>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "oxy/error.hpp"
#include "oxy/service/api.hpp"
#include "oxy/service/server.hpp"

namespace {

struct Globals {
  std::string store = "oxy_store";
  std::string config;
  std::string templates;
  bool json = false;
};

std::optional<std::string> opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return s;
}

oxy::Api make_api(const Globals& g) {
  oxy::ApiOptions options;
  options.store = g.store;
  if (!g.config.empty()) options.config = g.config;
  if (!g.templates.empty()) options.templates_dir = g.templates;
  return oxy::Api(options);
}

// Prints the result and returns the exit code.
int emit(const Globals& g, const oxy::ApiResult& result,
         const std::function<void(const oxy::Json&)>& human = nullptr) {
  if (g.json) {
    std::cout << result.envelope.dump() << "\n";
  } else if (!result.ok()) {
    const auto& e = result.envelope["error"];
    std::cerr << "error: " << e.value("code", "") << ": " << e.value("message", "") << "\n";
    if (e.contains("trace_id")) std::cerr << "trace_id: " << e["trace_id"].get<std::string>() << "\n";
  } else if (human) {
    human(result.data());
  } else {
    std::cout << result.data().dump(2) << "\n";
  }
  return result.ok() ? 0 : 1;
}

std::pair<std::string, std::string> split_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("expected key=value, got '" + text + "'");
  return {text.substr(0, eq), text.substr(eq + 1)};
}

oxy::Json json_or_string(const std::string& text) {
  oxy::Json j = oxy::Json::parse(text, nullptr, false);
  return j.is_discarded() ? oxy::Json(text) : j;
}

oxy::Server* g_server = nullptr;

void handle_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"oxy: multi-agent runtime, trace inspector and asset bank"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--store", g.store, "Trace and bank directory")->capture_default_str();
  app.add_option("--config", g.config, "MAS config file");
  app.add_option("--templates", g.templates, "Directory of annotation templates");
  app.add_flag("--json", g.json, "Print the response envelope as JSON");

  std::function<int()> action;

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  std::string bind = "127.0.0.1";
  int port = 8080;
  std::string static_dir;
  serve->add_option("--bind", bind, "Listen address")->capture_default_str();
  serve->add_option("--port", port, "Listen port (0 picks one)")->capture_default_str();
  serve->add_option("--static-dir", static_dir, "Directory served at /");
  serve->callback([&] {
    action = [&] {
      auto api = make_api(g);
      oxy::ServerOptions options{bind, port, opt(static_dir)};
      oxy::Server server(api, options);
      const int bound = server.bind();
      std::cout << "listening on http://" << bind << ":" << bound << std::endl;
      g_server = &server;
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      server.listen();
      g_server = nullptr;
      return 0;
    };
  });

  // chat
  auto* chat = app.add_subcommand("chat", "Run one query offline against the config");
  std::string query, group;
  chat->add_option("--query,-q", query, "User query")->required();
  chat->add_option("--group", group, "Session group id");
  chat->callback([&] {
    action = [&] {
      if (g.config.empty()) throw CLI::RequiredError("--config");
      auto api = make_api(g);
      return emit(g, api.chat(query, opt(group)), [](const oxy::Json& d) {
        const auto& answer = d["answer"];
        std::cout << (answer.is_string() ? answer.get<std::string>() : answer.dump()) << "\n"
                  << "trace_id: " << d["trace_id"].get<std::string>() << "\n";
      });
    };
  });

  // trace
  auto* trace = app.add_subcommand("trace", "Inspect and regenerate traces");
  trace->require_subcommand(1);
  auto* trace_list = trace->add_subcommand("list", "List traces");
  trace_list->callback([&] { action = [&] { return emit(g, make_api(g).list_traces()); }; });

  auto* trace_show = trace->add_subcommand("show", "Show a trace graph");
  std::string trace_id, version, call_id;
  bool as_dot = false, as_timing = false, as_events = false;
  trace_show->add_option("trace_id", trace_id)->required();
  trace_show->add_option("--version", version, "Version id (default: root)");
  auto* dot_flag = trace_show->add_flag("--dot", as_dot, "Graphviz output");
  auto* timing_flag = trace_show->add_flag("--timing", as_timing, "Timing breakdown");
  auto* events_flag = trace_show->add_flag("--events", as_events, "Raw event log");
  dot_flag->excludes(timing_flag)->excludes(events_flag);
  timing_flag->excludes(events_flag);
  trace_show->callback([&] {
    action = [&] {
      auto api = make_api(g);
      if (as_dot)
        return emit(g, api.dot(trace_id, opt(version)),
                    [](const oxy::Json& d) { std::cout << d["dot"].get<std::string>(); });
      if (as_timing) return emit(g, api.timing(trace_id, opt(version)));
      if (as_events) return emit(g, api.events(trace_id, opt(version)));
      return emit(g, api.graph(trace_id, opt(version)));
    };
  });

  auto* trace_versions = trace->add_subcommand("versions", "List versions of a trace");
  trace_versions->add_option("trace_id", trace_id)->required();
  trace_versions->callback([&] { action = [&] { return emit(g, make_api(g).versions(trace_id)); }; });

  auto* regen = trace->add_subcommand("regenerate", "Re-run a call under overrides");
  std::vector<std::string> sets;
  regen->add_option("trace_id", trace_id)->required();
  regen->add_option("call_id", call_id)->required();
  regen->add_option("--version", version, "Source version (default: root)");
  regen->add_option("--set", sets,
                    "system_prompt=..., model_binding=..., or arg.<name>=<value>");
  regen->callback([&] {
    action = [&] {
      oxy::Json overrides = oxy::Json::object();
      for (const auto& s : sets) {
        auto [key, value] = split_assignment(s);
        if (key == "system_prompt" || key == "model_binding") overrides[key] = value;
        else if (key.rfind("arg.", 0) == 0) overrides["arguments"][key.substr(4)] = json_or_string(value);
        else throw CLI::ValidationError("--set", "unknown override '" + key + "'");
      }
      return emit(g, make_api(g).regenerate(trace_id, call_id, overrides, opt(version)),
                  [](const oxy::Json& d) { std::cout << d["new_version_id"].get<std::string>() << "\n"; });
    };
  });

  // bank
  auto* bank = app.add_subcommand("bank", "Drive the asset bank");
  bank->require_subcommand(1);
  std::string record_id, state, template_id = "qa", note, priority, out_file;
  auto* deposit = bank->add_subcommand("deposit", "Deposit a sealed trace");
  deposit->add_option("trace_id", trace_id)->required();
  deposit->add_option("--version", version, "Version id (default: root)");
  deposit->callback([&] {
    action = [&] { return emit(g, make_api(g).bank_deposit(trace_id, opt(version))); };
  });

  auto* list = bank->add_subcommand("list", "List records");
  list->add_option("--state", state, "pending|annotated|approved|rejected");
  list->callback([&] { action = [&] { return emit(g, make_api(g).bank_records(opt(state))); }; });

  auto* show = bank->add_subcommand("show", "Show one record");
  show->add_option("record_id", record_id)->required();
  show->callback([&] { action = [&] { return emit(g, make_api(g).bank_record(record_id)); }; });

  auto* annotate = bank->add_subcommand("annotate", "Annotate a pending record");
  std::vector<std::string> fields, json_fields;
  annotate->add_option("record_id", record_id)->required();
  annotate->add_option("--template", template_id, "Template id")->capture_default_str();
  annotate->add_option("--field", fields, "name=text");
  annotate->add_option("--field-json", json_fields, "name=<json value>");
  annotate->callback([&] {
    action = [&] {
      oxy::Json payload = oxy::Json::object();
      for (const auto& f : fields) {
        auto [key, value] = split_assignment(f);
        payload[key] = value;
      }
      for (const auto& f : json_fields) {
        auto [key, value] = split_assignment(f);
        oxy::Json j = oxy::Json::parse(value, nullptr, false);
        if (j.is_discarded()) throw CLI::ValidationError("--field-json", "'" + value + "' is not JSON");
        payload[key] = j;
      }
      return emit(g, make_api(g).bank_annotate(record_id, template_id, payload));
    };
  });

  auto* audit = bank->add_subcommand("audit", "Approve or reject a record");
  bool approve = false, reject = false;
  audit->add_option("record_id", record_id)->required();
  auto* approve_flag = audit->add_flag("--approve", approve);
  auto* reject_flag = audit->add_flag("--reject", reject);
  approve_flag->excludes(reject_flag);
  audit->add_option("--note", note, "Audit note");
  audit->callback([&] {
    action = [&] {
      if (!approve && !reject) throw CLI::RequiredError("--approve or --reject");
      return emit(g, make_api(g).bank_audit(record_id, approve ? "approve" : "reject", note));
    };
  });

  auto* reopen = bank->add_subcommand("reopen", "Move a rejected record back to pending");
  reopen->add_option("record_id", record_id)->required();
  reopen->callback([&] { action = [&] { return emit(g, make_api(g).bank_reopen(record_id)); }; });

  auto* exp = bank->add_subcommand("export", "Export knowledge from approved records");
  std::string export_template;
  exp->add_option("--priority", priority, "P0|P1|P2");
  exp->add_option("--template", export_template, "Template id");
  std::optional<double> since;
  exp->add_option("--since", since, "Only records deposited at or after this time (epoch ms)");
  exp->add_option("-o,--output", out_file, "JSONL output file");
  exp->callback([&] {
    action = [&] {
      auto result = make_api(g).bank_export(opt(priority), opt(export_template), since);
      if (result.ok() && !out_file.empty()) {
        std::vector<oxy::KnowledgeSample> samples;
        for (const auto& s : result.data()["samples"]) samples.push_back(oxy::sample_from_json(s));
        oxy::Bank::write_export(out_file, samples);
      }
      return emit(g, result, [&](const oxy::Json& d) {
        if (out_file.empty()) {
          for (const auto& s : d["samples"]) std::cout << s.dump() << "\n";
        } else {
          std::cout << d["samples"].size() << " sample(s) written to " << out_file << "\n";
        }
      });
    };
  });

  // prompt
  auto* prompt = app.add_subcommand("prompt", "Prompt versions from approved traces");
  prompt->require_subcommand(1);
  std::string agent, binding;
  int prompt_version = 0;
  auto* optimize = prompt->add_subcommand("optimize", "Propose a refined system prompt");
  optimize->add_option("agent", agent)->required();
  optimize->add_option("--binding", binding, "Model binding for the optimizer");
  optimize->callback([&] {
    action = [&] { return emit(g, make_api(g).optimize_prompt(agent, opt(binding))); };
  });
  auto* apply = prompt->add_subcommand("apply", "Apply a prompt version");
  apply->add_option("agent", agent)->required();
  apply->add_option("version", prompt_version)->required();
  apply->callback([&] {
    action = [&] { return emit(g, make_api(g).apply_prompt(agent, prompt_version)); };
  });
  auto* plist = prompt->add_subcommand("list", "List prompt versions");
  plist->add_option("agent", agent)->required();
  plist->callback([&] { action = [&] { return emit(g, make_api(g).prompt_versions(agent)); }; });

  // topology
  auto* topology = app.add_subcommand("topology", "Validate the MAS topology");
  topology->callback([&] {
    action = [&] {
      if (g.config.empty()) throw CLI::RequiredError("--config");
      auto result = make_api(g).topology();
      const int code = emit(g, result, [](const oxy::Json& d) {
        for (const auto& e : d["edges"])
          std::cout << e["from"].get<std::string>() << " -> " << e["to"].get<std::string>() << " ("
                    << e["kind"].get<std::string>() << ")\n";
        for (const auto& i : d["issues"]) {
          std::cout << i["severity"].get<std::string>() << ": " << i["kind"].get<std::string>() << " "
                    << i["node"].get<std::string>();
          if (!i.value("target", "").empty()) std::cout << " -> " << i["target"].get<std::string>();
          std::cout << "\n";
        }
      });
      if (code != 0) return code;
      return result.data()["clean"].get<bool>() ? 0 : 1;
    };
  });

  try {
    app.parse(argc, argv);
    return action ? action() : 2;
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::Error& e) {
    app.exit(e);
    return 2;
  } catch (const oxy::Error& e) {
    std::cerr << "error: " << oxy::to_string(e.code()) << ": " << e.what() << "\n";
    return e.code() == oxy::Errc::ConfigError ? 2 : 1;
  }
}
