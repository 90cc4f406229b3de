#include "oxy/service/server.hpp"

#include <httplib.h>

#include "oxy/error.hpp"

namespace oxy {
namespace {

void reply(httplib::Response& res, const ApiResult& result) {
  res.status = result.http_status;
  res.set_content(result.envelope.dump(), "application/json");
}

std::optional<std::string> query(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  return req.get_param_value(key);
}

// Parses the JSON body; an empty body is an empty object.
std::optional<Json> body(const httplib::Request& req, httplib::Response& res) {
  if (req.body.empty()) return Json::object();
  Json j = Json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    reply(res, api_error(400, "InvalidArgument", "request body must be a JSON object"));
    return std::nullopt;
  }
  return j;
}

std::optional<std::string> string_field(const Json& j, const char* key) {
  if (j.contains(key) && j[key].is_string()) return j[key].get<std::string>();
  return std::nullopt;
}

std::string sse_frame(const TraceEvent& e) {
  return "id: " + std::to_string(e.seq) + "\nevent: trace\ndata: " + to_json(e).dump() + "\n\n";
}

}  // namespace

Server::Server(Api& api, ServerOptions options)
    : api_(api), options_(std::move(options)), http_(std::make_unique<httplib::Server>()) {
  routes();
}

Server::~Server() { stop(); }

int Server::bind() {
  int port = options_.port;
  if (port == 0) {
    port = http_->bind_to_any_port(options_.bind);
    if (port < 0) throw Error(Errc::IoError, "cannot bind " + options_.bind);
  } else if (!http_->bind_to_port(options_.bind, port)) {
    throw Error(Errc::IoError, "cannot bind " + options_.bind + ":" + std::to_string(port));
  }
  return port;
}

void Server::listen() { http_->listen_after_bind(); }

void Server::stop() {
  if (http_ && http_->is_running()) http_->stop();
}

void Server::routes() {
  auto& s = *http_;
  Api& api = api_;

  s.Post("/chat", [&api](const httplib::Request& req, httplib::Response& res) {
    auto j = body(req, res);
    if (!j) return;
    auto q = string_field(*j, "query");
    if (!q) return reply(res, api_error(400, "InvalidArgument", "'query' is required"));
    reply(res, api.chat(*q, string_field(*j, "group_id")));
  });

  s.Get("/traces", [&api](const httplib::Request&, httplib::Response& res) {
    reply(res, api.list_traces());
  });
  s.Get("/traces/:id/graph", [&api](const httplib::Request& req, httplib::Response& res) {
    reply(res, api.graph(req.path_params.at("id"), query(req, "version")));
  });
  s.Get("/traces/:id/timing", [&api](const httplib::Request& req, httplib::Response& res) {
    reply(res, api.timing(req.path_params.at("id"), query(req, "version")));
  });
  s.Get("/traces/:id/dot", [&api](const httplib::Request& req, httplib::Response& res) {
    reply(res, api.dot(req.path_params.at("id"), query(req, "version")));
  });
  s.Get("/traces/:id/versions", [&api](const httplib::Request& req, httplib::Response& res) {
    reply(res, api.versions(req.path_params.at("id")));
  });

  s.Get("/traces/:id/events", [&api](const httplib::Request& req, httplib::Response& res) {
    const auto trace_id = req.path_params.at("id");
    std::string version;
    try {
      version = query(req, "version").value_or(api.traces().root_version(trace_id));
      api.traces().version(trace_id, version);
    } catch (const Error& e) {
      return reply(res, api_error(http_status_for(e.code()), to_string(e.code()), e.what()));
    }
    std::uint64_t from = 0;
    try {
      if (auto f = query(req, "from_seq")) from = std::stoull(*f);
      else if (req.has_header("Last-Event-ID")) from = std::stoull(req.get_header_value("Last-Event-ID")) + 1;
    } catch (const std::exception&) {
      return reply(res, api_error(400, "InvalidArgument", "bad from_seq"));
    }
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream",
        [&api, trace_id, version, from](std::size_t, httplib::DataSink& sink) {
          bool open = true;
          api.traces().stream(trace_id, version, from, [&](const TraceEvent& e) {
            const auto frame = sse_frame(e);
            open = sink.write(frame.data(), frame.size());
            return open;
          });
          if (open) {
            const std::string sealed = "event: sealed\ndata: {}\n\n";
            sink.write(sealed.data(), sealed.size());
          }
          sink.done();
          return true;
        });
  });

  s.Post("/traces/:id/nodes/:call_id/regenerate",
         [&api](const httplib::Request& req, httplib::Response& res) {
           auto j = body(req, res);
           if (!j) return;
           const Json overrides = j->contains("overrides") ? (*j)["overrides"] : *j;
           reply(res, api.regenerate(req.path_params.at("id"), req.path_params.at("call_id"),
                                     overrides, string_field(*j, "version")));
         });

  s.Post("/runtime/breakpoints", [&api](const httplib::Request& req, httplib::Response& res) {
    auto j = body(req, res);
    if (!j) return;
    auto node = string_field(*j, "node");
    auto stage = string_field(*j, "stage");
    if (!node || !stage)
      return reply(res, api_error(400, "InvalidArgument", "'node' and 'stage' are required"));
    reply(res, api.add_breakpoint(*node, *stage));
  });
  s.Delete("/runtime/breakpoints", [&api](const httplib::Request& req, httplib::Response& res) {
    auto node = query(req, "node");
    auto stage = query(req, "stage");
    if (!node || !stage)
      return reply(res, api_error(400, "InvalidArgument", "'node' and 'stage' are required"));
    reply(res, api.remove_breakpoint(*node, *stage));
  });
  s.Get("/runtime/paused", [&api](const httplib::Request&, httplib::Response& res) {
    reply(res, api.paused());
  });
  s.Post("/runtime/resume", [&api](const httplib::Request& req, httplib::Response& res) {
    auto j = body(req, res);
    if (!j) return;
    auto call_id = string_field(*j, "call_id");
    if (!call_id) return reply(res, api_error(400, "InvalidArgument", "'call_id' is required"));
    reply(res, api.resume(*call_id, j->value("overrides", Json::object())));
  });
  s.Get("/requests/:id/scopes", [&api](const httplib::Request& req, httplib::Response& res) {
    reply(res, api.request_scopes(req.path_params.at("id"), query(req, "group_id")));
  });

  s.Get("/bank/records", [&api](const httplib::Request& req, httplib::Response& res) {
    reply(res, api.bank_records(query(req, "state")));
  });
  s.Post("/bank/records", [&api](const httplib::Request& req, httplib::Response& res) {
    auto j = body(req, res);
    if (!j) return;
    auto trace_id = string_field(*j, "trace_id");
    if (!trace_id) return reply(res, api_error(400, "InvalidArgument", "'trace_id' is required"));
    reply(res, api.bank_deposit(*trace_id, string_field(*j, "version_id")));
  });
  s.Get("/bank/records/:id", [&api](const httplib::Request& req, httplib::Response& res) {
    reply(res, api.bank_record(req.path_params.at("id")));
  });
  s.Post("/bank/records/:id/annotate", [&api](const httplib::Request& req, httplib::Response& res) {
    auto j = body(req, res);
    if (!j) return;
    reply(res, api.bank_annotate(req.path_params.at("id"),
                                 string_field(*j, "template_id").value_or("qa"),
                                 j->value("payload", Json::object())));
  });
  s.Post("/bank/records/:id/audit", [&api](const httplib::Request& req, httplib::Response& res) {
    auto j = body(req, res);
    if (!j) return;
    reply(res, api.bank_audit(req.path_params.at("id"), string_field(*j, "verdict").value_or(""),
                              string_field(*j, "note").value_or("")));
  });
  s.Post("/bank/records/:id/reopen", [&api](const httplib::Request& req, httplib::Response& res) {
    reply(res, api.bank_reopen(req.path_params.at("id")));
  });
  s.Get("/bank/export", [&api](const httplib::Request& req, httplib::Response& res) {
    std::optional<double> since;
    if (auto v = query(req, "since")) {
      try {
        since = std::stod(*v);
      } catch (const std::exception&) {
        return reply(res, api_error(400, "InvalidArgument", "bad since"));
      }
    }
    reply(res, api.bank_export(query(req, "priority"), query(req, "template"), since));
  });

  s.Post("/agents/:name/optimize-prompt", [&api](const httplib::Request& req, httplib::Response& res) {
    auto j = body(req, res);
    if (!j) return;
    reply(res, api.optimize_prompt(req.path_params.at("name"), string_field(*j, "binding")));
  });
  s.Post("/agents/:name/apply-prompt", [&api](const httplib::Request& req, httplib::Response& res) {
    auto j = body(req, res);
    if (!j) return;
    if (!j->contains("version") || !(*j)["version"].is_number_integer())
      return reply(res, api_error(400, "InvalidArgument", "'version' must be an integer"));
    reply(res, api.apply_prompt(req.path_params.at("name"), (*j)["version"].get<int>()));
  });
  s.Get("/agents/:name/prompts", [&api](const httplib::Request& req, httplib::Response& res) {
    reply(res, api.prompt_versions(req.path_params.at("name")));
  });
  s.Get("/mas/topology", [&api](const httplib::Request&, httplib::Response& res) {
    reply(res, api.topology());
  });

  if (options_.static_dir) s.set_mount_point("/", options_.static_dir->string());
}

}  // namespace oxy
