#include "oxy/service/api.hpp"

#include "oxy/error.hpp"
#include "oxy/tools/builtin.hpp"
#include "oxy/tracer/graph.hpp"

namespace oxy {

ApiResult api_ok(Json data, int http_status) {
  return {http_status, Json{{"ok", true}, {"data", std::move(data)}}};
}

ApiResult api_error(int http_status, std::string_view code, std::string_view message, Json extra) {
  Json error{{"code", code}, {"message", message}};
  if (extra.is_object()) error.update(extra);
  return {http_status, Json{{"ok", false}, {"error", std::move(error)}}};
}

int http_status_for(Errc code) noexcept {
  switch (code) {
    case Errc::NodeNotFound:
    case Errc::UnknownTrace:
    case Errc::UnknownCall:
    case Errc::UnknownRecord:
    case Errc::UnknownTemplate: return 404;
    case Errc::InvalidTransition:
    case Errc::OverrideInvalid:
    case Errc::SealedTrace:
    case Errc::UnsealedTrace:
    case Errc::NoApprovedTraces:
    case Errc::NameConflict: return 409;
    case Errc::TemplateViolation: return 422;
    case Errc::NoEntrypoint: return 503;
    case Errc::ModelUnavailable: return 502;
    case Errc::InvalidArgument:
    case Errc::InvalidSelector:
    case Errc::InvalidSpec:
    case Errc::MissingGroupId:
    case Errc::ConfigError: return 400;
    default: return 500;
  }
}

template <class F>
ApiResult Api::guarded(F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    return api_error(http_status_for(e.code()), to_string(e.code()), e.what());
  } catch (const std::exception& e) {
    return api_error(500, "Internal", e.what());
  }
}

Api::Api(const ApiOptions& options) {
  traces_ = std::make_shared<TraceStore>(options.store);
  runtime_ = std::make_unique<Runtime>(traces_);
  register_builtin_tools(*runtime_);
  bank_ = std::make_unique<Bank>(traces_, options.store / "bank");
  if (options.templates_dir) bank_->load_templates(*options.templates_dir);
  if (options.config) {
    const auto config = load_config(*options.config);
    apply_config(*runtime_, config);
    entrypoint_ = config.entrypoint;
    configured_ = true;
    bank_->restore_prompts(*runtime_);
  }
}

std::string Api::resolve_version(const std::string& trace_id,
                                 const std::optional<std::string>& version) {
  return version.value_or(traces_->root_version(trace_id));
}

ApiResult Api::chat(const std::string& query, const std::optional<std::string>& group_id) {
  return guarded([&] {
    if (!entrypoint_) throw Error(Errc::NoEntrypoint, "no entrypoint agent configured");
    RunOptions options;
    options.callee = *entrypoint_;
    options.arguments = Json{{"query", query}};
    options.group_id = group_id;
    auto run = runtime_->run(options);
    if (!run.response.ok())
      return api_error(500, "RuntimeError", run.response.error_detail.value_or("error"),
                       Json{{"trace_id", run.trace_id}, {"version_id", run.version_id}});
    return api_ok(Json{{"trace_id", run.trace_id},
                       {"version_id", run.version_id},
                       {"answer", run.response.output}});
  });
}

ApiResult Api::list_traces() {
  return guarded([&] {
    Json out = Json::array();
    for (const auto& id : traces_->list_traces()) {
      const auto root = traces_->root_version(id);
      const auto meta = traces_->version(id, root);
      out.push_back(Json{{"trace_id", id},
                         {"root_version", root},
                         {"created_at", meta.created_at},
                         {"sealed", meta.sealed},
                         {"versions", traces_->versions(id).size()}});
    }
    return api_ok(Json{{"traces", out}});
  });
}

ApiResult Api::graph(const std::string& trace_id, const std::optional<std::string>& version) {
  return guarded([&] { return api_ok(to_json(assemble_graph(*traces_, trace_id, version))); });
}

ApiResult Api::events(const std::string& trace_id, const std::optional<std::string>& version) {
  return guarded([&] {
    Json out = Json::array();
    for (const auto& e : traces_->events(trace_id, resolve_version(trace_id, version)))
      out.push_back(to_json(e));
    return api_ok(Json{{"events", out}});
  });
}

ApiResult Api::timing(const std::string& trace_id, const std::optional<std::string>& version) {
  return guarded([&] { return api_ok(to_json(timing_report(*traces_, trace_id, version))); });
}

ApiResult Api::dot(const std::string& trace_id, const std::optional<std::string>& version) {
  return guarded([&] {
    return api_ok(Json{{"dot", export_dot(assemble_graph(*traces_, trace_id, version))}});
  });
}

ApiResult Api::versions(const std::string& trace_id) {
  return guarded([&] {
    Json out = Json::array();
    for (const auto& v : traces_->versions(trace_id)) out.push_back(to_json(v));
    return api_ok(Json{{"trace_id", trace_id}, {"versions", out}});
  });
}

ApiResult Api::regenerate(const std::string& trace_id, const std::string& call_id,
                          const Json& overrides, const std::optional<std::string>& version) {
  return guarded([&] {
    if (!configured_) throw Error(Errc::NoEntrypoint, "regeneration needs a configured runtime");
    const auto parsed = overrides_from_json(overrides.is_null() ? Json::object() : overrides);
    const auto created =
        runtime_->regenerate(trace_id, resolve_version(trace_id, version), call_id, parsed);
    return api_ok(Json{{"trace_id", trace_id}, {"new_version_id", created}});
  });
}

namespace {

LifecycleStage stage_arg(const std::string& text) {
  auto stage = parse_stage(text);
  if (!stage) throw Error(Errc::InvalidArgument, "unknown stage '" + text + "'");
  return *stage;
}

}  // namespace

ApiResult Api::add_breakpoint(const std::string& node, const std::string& stage) {
  return guarded([&] {
    runtime_->breakpoints().add(node, stage_arg(stage));
    return api_ok(Json{{"node", node}, {"stage", stage}});
  });
}

ApiResult Api::remove_breakpoint(const std::string& node, const std::string& stage) {
  return guarded([&] {
    if (!runtime_->breakpoints().remove(node, stage_arg(stage)))
      return api_error(404, "UnknownBreakpoint", "no breakpoint at " + node + "/" + stage);
    return api_ok(Json{{"node", node}, {"stage", stage}});
  });
}

ApiResult Api::paused() {
  return guarded([&] {
    Json out = Json::array();
    for (const auto& p : runtime_->breakpoints().paused()) out.push_back(to_json(p));
    return api_ok(Json{{"paused", out}});
  });
}

ApiResult Api::resume(const std::string& call_id, const Json& overrides) {
  return guarded([&] {
    const auto parsed = overrides_from_json(overrides.is_null() ? Json::object() : overrides);
    if (!runtime_->breakpoints().resume(call_id, parsed))
      return api_error(404, "UnknownCall", "no paused call " + call_id);
    return api_ok(Json{{"call_id", call_id}, {"resumed", true}});
  });
}

ApiResult Api::request_scopes(const std::string& request_id,
                              const std::optional<std::string>& group_id) {
  return guarded([&] { return api_ok(runtime_->scopes().dump(request_id, group_id)); });
}

ApiResult Api::bank_records(const std::optional<std::string>& state) {
  return guarded([&] {
    std::optional<ReviewState> filter;
    if (state) {
      filter = parse_review_state(*state);
      if (!filter) throw Error(Errc::InvalidArgument, "unknown state '" + *state + "'");
    }
    Json out = Json::array();
    for (const auto& r : bank_->records(filter)) out.push_back(to_json(r));
    return api_ok(Json{{"records", out}});
  });
}

ApiResult Api::bank_record(const std::string& record_id) {
  return guarded([&] { return api_ok(to_json(bank_->record(record_id))); });
}

ApiResult Api::bank_deposit(const std::string& trace_id, const std::optional<std::string>& version) {
  return guarded([&] { return api_ok(to_json(bank_->deposit(trace_id, version))); });
}

ApiResult Api::bank_annotate(const std::string& record_id, const std::string& template_id,
                             const Json& payload) {
  return guarded([&] { return api_ok(to_json(bank_->annotate(record_id, template_id, payload))); });
}

ApiResult Api::bank_audit(const std::string& record_id, const std::string& verdict,
                          const std::string& note) {
  return guarded([&] {
    Verdict v;
    if (verdict == "approve") v = Verdict::Approve;
    else if (verdict == "reject") v = Verdict::Reject;
    else throw Error(Errc::InvalidArgument, "verdict must be approve or reject");
    return api_ok(to_json(bank_->audit(record_id, v, note)));
  });
}

ApiResult Api::bank_reopen(const std::string& record_id) {
  return guarded([&] { return api_ok(to_json(bank_->reopen(record_id))); });
}

ApiResult Api::bank_export(const std::optional<std::string>& priority,
                           const std::optional<std::string>& template_id,
                           const std::optional<double>& since) {
  return guarded([&] {
    ExportFilter filter;
    if (priority) {
      filter.priority = parse_priority(*priority);
      if (!filter.priority) throw Error(Errc::InvalidArgument, "unknown priority '" + *priority + "'");
    }
    filter.template_id = template_id;
    filter.since = since;
    Json out = Json::array();
    for (const auto& s : bank_->export_knowledge(filter)) out.push_back(to_json(s));
    return api_ok(Json{{"samples", out}});
  });
}

ApiResult Api::optimize_prompt(const std::string& agent, const std::optional<std::string>& binding) {
  return guarded([&] { return api_ok(to_json(bank_->optimize_prompt(agent, *runtime_, binding))); });
}

ApiResult Api::apply_prompt(const std::string& agent, int version) {
  return guarded([&] { return api_ok(to_json(bank_->apply_prompt(agent, version, *runtime_))); });
}

ApiResult Api::prompt_versions(const std::string& agent) {
  return guarded([&] {
    Json out = Json::array();
    for (const auto& v : bank_->prompt_versions(agent)) out.push_back(to_json(v));
    return api_ok(Json{{"agent", agent}, {"versions", out}});
  });
}

ApiResult Api::topology() {
  return guarded([&] {
    const auto specs = runtime_->registry().snapshot();
    Json nodes = Json::array();
    Json edges = Json::array();
    for (const auto& spec : specs) {
      nodes.push_back(Json{{"name", spec.name},
                           {"kind", to_string(spec.kind)},
                           {"description", spec.description},
                           {"permitted_callees", spec.permitted_callees}});
      for (const auto& callee : spec.permitted_callees)
        edges.push_back(Json{{"from", spec.name}, {"to", callee}, {"kind", "permission"}});
      if (spec.kind == NodeKind::Agent && spec.config.contains("llm"))
        edges.push_back(Json{{"from", spec.name}, {"to", spec.config["llm"]}, {"kind", "llm"}});
    }
    std::vector<std::string> entrypoints;
    if (entrypoint_) entrypoints.push_back(*entrypoint_);
    Json issues = Json::array();
    bool has_error = false;
    for (const auto& issue : validate_topology(runtime_->registry(), entrypoints)) {
      has_error = has_error || issue.severity == Severity::Error;
      issues.push_back(to_json(issue));
    }
    return api_ok(Json{{"entrypoint", entrypoint_ ? Json(*entrypoint_) : Json()},
                       {"nodes", nodes},
                       {"edges", edges},
                       {"issues", issues},
                       {"clean", !has_error}});
  });
}

}  // namespace oxy
