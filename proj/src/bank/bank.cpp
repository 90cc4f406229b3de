#include "oxy/bank/bank.hpp"

#include <algorithm>

#include "oxy/core/runtime.hpp"
#include "oxy/error.hpp"
#include "oxy/ids.hpp"
#include "oxy/md5.hpp"
#include "oxy/tracer/graph.hpp"

namespace oxy {
namespace {

Json optional_json(const auto& value) {
  if (value) return Json(*value);
  return nullptr;
}

BankRecord record_from_json(const Json& j) {
  BankRecord r;
  r.record_id = j.at("record_id").get<std::string>();
  r.digest = j.at("digest").get<std::string>();
  r.trace_ref = {j.at("trace_id").get<std::string>(), j.at("version_id").get<std::string>()};
  r.priority = parse_priority(j.value("priority", "P2")).value_or(Priority::P2);
  r.occurrence_count = j.value("occurrence_count", 1);
  r.state = parse_review_state(j.value("state", "pending")).value_or(ReviewState::Pending);
  r.nodes = j.value("nodes", std::vector<std::string>{});
  r.deposited_at = j.value("deposited_at", 0.0);
  r.state_changed_at = j.value("state_changed_at", r.deposited_at);
  return r;
}

PromptVersion prompt_from_json(const Json& j) {
  PromptVersion p;
  p.agent = j.at("agent").get<std::string>();
  p.version = j.at("version").get<int>();
  p.text = j.at("text").get<std::string>();
  if (j.contains("parent") && !j["parent"].is_null()) p.parent = j["parent"].get<int>();
  p.rationale = j.value("rationale", "");
  p.applied = j.value("applied", false);
  p.created_at = j.value("created_at", 0.0);
  return p;
}

}  // namespace

Json to_json(const BankRecord& r) {
  return {{"record_id", r.record_id},
          {"digest", r.digest},
          {"trace_id", r.trace_ref.trace_id},
          {"version_id", r.trace_ref.version_id},
          {"priority", to_string(r.priority)},
          {"occurrence_count", r.occurrence_count},
          {"state", to_string(r.state)},
          {"template_id", optional_json(r.template_id)},
          {"annotation", r.annotation ? *r.annotation : Json(nullptr)},
          {"audit_note", optional_json(r.audit_note)},
          {"nodes", r.nodes},
          {"deposited_at", r.deposited_at},
          {"state_changed_at", r.state_changed_at}};
}

Json to_json(const KnowledgeSample& s) {
  return {{"sample_id", s.sample_id},
          {"record_id", s.record_id},
          {"template_id", s.template_id},
          {"priority", to_string(s.priority)},
          {"payload", s.payload},
          {"exported_at", s.exported_at}};
}

KnowledgeSample sample_from_json(const Json& j) {
  KnowledgeSample s;
  s.sample_id = j.at("sample_id").get<std::string>();
  s.record_id = j.at("record_id").get<std::string>();
  s.template_id = j.value("template_id", "");
  s.priority = parse_priority(j.value("priority", "P2")).value_or(Priority::P2);
  s.payload = j.value("payload", Json::object());
  s.exported_at = j.value("exported_at", 0.0);
  return s;
}

Json to_json(const PromptVersion& p) {
  return {{"agent", p.agent},   {"version", p.version},     {"text", p.text},
          {"parent", optional_json(p.parent)},              {"rationale", p.rationale},
          {"applied", p.applied}, {"created_at", p.created_at}};
}

std::string canonical_digest(const Json& trace_export) {
  return md5_hex(canonical_dump(trace_export.value("calls", Json::array())));
}

Priority infer_priority(const Json& trace_export) {
  bool has_agent = false;
  for (const auto& call : trace_export.value("calls", Json::array()))
    has_agent = has_agent || call.value("kind", "") == "agent";
  if (!has_agent) return Priority::P2;
  if (trace_export.value("root_caller", "") == kUserCaller) return Priority::P0;
  return Priority::P1;
}

std::vector<ChatMessage> render_optimizer_prompt(const std::string& agent,
                                                 const std::string& current_prompt,
                                                 const std::vector<Json>& excerpts) {
  std::string system =
      "You improve the system prompt of one agent in a multi-agent system ("
      + std::string(kOptimizerTemplateVersion) +
      "). Keep what works in the current prompt, fix what the reviewed executions show is "
      "missing, and reply with the new system prompt only.";
  std::string user = "Agent: " + agent + "\nCurrent system prompt:\n<<<\n" + current_prompt +
                     "\n>>>\nApproved executions:\n";
  for (std::size_t i = 0; i < std::min(excerpts.size(), kOptimizerExcerpts); ++i) {
    auto text = excerpts[i].is_string() ? excerpts[i].get<std::string>() : canonical_dump(excerpts[i]);
    if (text.size() > kOptimizerExcerptBytes) text.resize(kOptimizerExcerptBytes);
    user += "[" + std::to_string(i + 1) + "] " + text + "\n";
  }
  user += "Reply with the improved system prompt for " + agent + ".";
  return {{Role::System, std::move(system)}, {Role::User, std::move(user)}};
}

Bank::Bank(std::shared_ptr<TraceStore> traces, std::filesystem::path dir)
    : traces_(std::move(traces)), dir_(std::move(dir)) {
  add_template(qa_template());
  if (dir_.empty()) return;
  std::filesystem::create_directories(dir_);
  const auto path = dir_ / "ledger.jsonl";
  if (std::ifstream in{path}) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      Json event = Json::parse(line, nullptr, false);
      if (event.is_discarded())
        throw Error(Errc::IoError, path.string() + ":" + std::to_string(lineno) + ": bad ledger line");
      replay(event);
    }
  }
  ledger_.open(path, std::ios::app);
  if (!ledger_) throw Error(Errc::IoError, "cannot open " + path.string());
}

void Bank::add_template(AnnotationTemplate t) {
  std::lock_guard lock(mutex_);
  templates_[t.template_id] = std::move(t);
}

void Bank::load_templates(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) return;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    std::ifstream in(entry.path());
    Json j = Json::parse(in, nullptr, false);
    if (j.is_discarded()) throw Error(Errc::ConfigError, entry.path().string() + " is not valid JSON");
    add_template(template_from_json(j));
  }
}

std::vector<AnnotationTemplate> Bank::templates() const {
  std::lock_guard lock(mutex_);
  std::vector<AnnotationTemplate> out;
  for (const auto& [id, t] : templates_) out.push_back(t);
  return out;
}

void Bank::append(const Json& event) {
  if (!ledger_.is_open()) return;
  ledger_ << event.dump() << '\n';
  ledger_.flush();
}

void Bank::replay(const Json& event) {
  const auto kind = event.at("event").get<std::string>();
  if (kind == "deposit") {
    auto r = record_from_json(event.at("record"));
    by_digest_[r.digest] = r.record_id;
    records_[r.record_id] = std::move(r);
  } else if (kind == "duplicate") {
    require(event.at("record_id").get<std::string>()).occurrence_count =
        event.at("occurrence_count").get<int>();
  } else if (kind == "transition") {
    auto& r = require(event.at("record_id").get<std::string>());
    r.state = parse_review_state(event.at("to").get<std::string>()).value();
    r.state_changed_at = event.value("at", r.state_changed_at);
    if (event.contains("template_id")) r.template_id = event["template_id"].get<std::string>();
    if (event.contains("annotation")) r.annotation = event["annotation"];
    if (event.contains("note")) r.audit_note = event["note"].get<std::string>();
  } else if (kind == "prompt_version") {
    auto p = prompt_from_json(event.at("version"));
    prompts_[p.agent].push_back(std::move(p));
  } else if (kind == "prompt_applied") {
    for (auto& p : prompts_[event.at("agent").get<std::string>()])
      p.applied = p.version == event.at("version").get<int>();
  }
}

BankRecord& Bank::require(const std::string& record_id) {
  auto it = records_.find(record_id);
  if (it == records_.end()) throw Error(Errc::UnknownRecord, "unknown record " + record_id);
  return it->second;
}

BankRecord Bank::deposit(const std::string& trace_id, const std::optional<std::string>& version_id) {
  const auto version = version_id.value_or(traces_->root_version(trace_id));
  if (!traces_->sealed(trace_id, version))
    throw Error(Errc::UnsealedTrace, "trace " + trace_id + " is not sealed");
  const auto exported = trace_export(*traces_, trace_id, version);
  const auto digest = canonical_digest(exported);

  std::lock_guard lock(mutex_);
  const auto at = now_ms();
  if (auto it = by_digest_.find(digest); it != by_digest_.end()) {
    auto& r = records_.at(it->second);
    ++r.occurrence_count;
    append({{"event", "duplicate"}, {"record_id", r.record_id},
            {"occurrence_count", r.occurrence_count}, {"at", at}});
    return r;
  }
  BankRecord r;
  r.record_id = new_id();
  r.digest = digest;
  r.trace_ref = {trace_id, version};
  r.priority = infer_priority(exported);
  for (const auto& call : exported["calls"]) {
    auto name = call.value("node", "");
    if (std::find(r.nodes.begin(), r.nodes.end(), name) == r.nodes.end()) r.nodes.push_back(name);
  }
  r.deposited_at = at;
  r.state_changed_at = at;
  append({{"event", "deposit"}, {"record", to_json(r)}, {"at", at}});
  by_digest_[digest] = r.record_id;
  records_[r.record_id] = r;
  return r;
}

BankRecord Bank::transition(const std::string& record_id, ReviewAction action, Json extra) {
  auto& r = require(record_id);
  const auto to = next_state(r.state, action);
  if (!to)
    throw Error(Errc::InvalidTransition, "cannot " + std::string(to_string(action)) + " a " +
                                             std::string(to_string(r.state)) + " record");
  Json event{{"event", "transition"},
             {"record_id", record_id},
             {"action", to_string(action)},
             {"from", to_string(r.state)},
             {"to", to_string(*to)},
             {"at", now_ms()}};
  event.update(extra);
  append(event);
  replay(event);
  return r;
}

BankRecord Bank::annotate(const std::string& record_id, const std::string& template_id,
                          const Json& payload) {
  std::lock_guard lock(mutex_);
  auto& r = require(record_id);
  auto t = templates_.find(template_id);
  if (t == templates_.end()) throw Error(Errc::UnknownTemplate, "unknown template " + template_id);
  if (!next_state(r.state, ReviewAction::Annotate))
    throw Error(Errc::InvalidTransition,
                "cannot annotate a " + std::string(to_string(r.state)) + " record");
  t->second.check(payload);
  return transition(record_id, ReviewAction::Annotate,
                    {{"template_id", template_id}, {"annotation", payload}});
}

BankRecord Bank::audit(const std::string& record_id, Verdict verdict, const std::string& note) {
  std::lock_guard lock(mutex_);
  return transition(record_id, verdict == Verdict::Approve ? ReviewAction::Approve : ReviewAction::Reject,
                    {{"note", note}});
}

BankRecord Bank::reopen(const std::string& record_id) {
  std::lock_guard lock(mutex_);
  return transition(record_id, ReviewAction::Reopen, Json::object());
}

BankRecord Bank::record(const std::string& record_id) const {
  std::lock_guard lock(mutex_);
  auto it = records_.find(record_id);
  if (it == records_.end()) throw Error(Errc::UnknownRecord, "unknown record " + record_id);
  return it->second;
}

std::vector<BankRecord> Bank::records(std::optional<ReviewState> state) const {
  std::vector<BankRecord> out;
  {
    std::lock_guard lock(mutex_);
    for (const auto& [id, r] : records_)
      if (!state || r.state == *state) out.push_back(r);
  }
  std::sort(out.begin(), out.end(), [](const BankRecord& a, const BankRecord& b) {
    return std::tie(a.deposited_at, a.record_id) < std::tie(b.deposited_at, b.record_id);
  });
  return out;
}

std::vector<KnowledgeSample> Bank::export_knowledge(const ExportFilter& filter) const {
  std::vector<KnowledgeSample> out;
  std::lock_guard lock(mutex_);
  const auto at = now_ms();
  std::vector<const BankRecord*> approved;
  for (const auto& [id, r] : records_) {
    if (r.state != ReviewState::Approved) continue;
    if (filter.priority && r.priority != *filter.priority) continue;
    if (filter.template_id && r.template_id != filter.template_id) continue;
    if (filter.since && r.deposited_at < *filter.since) continue;
    approved.push_back(&r);
  }
  std::sort(approved.begin(), approved.end(), [](const BankRecord* a, const BankRecord* b) {
    return std::tie(a->deposited_at, a->record_id) < std::tie(b->deposited_at, b->record_id);
  });
  for (const auto* r : approved) {
    KnowledgeSample s;
    s.sample_id = "ks-" + r->record_id;
    s.record_id = r->record_id;
    s.template_id = r->template_id.value_or("");
    s.priority = r->priority;
    const auto t = templates_.find(s.template_id);
    const auto annotation = r->annotation.value_or(Json::object());
    s.payload = t != templates_.end() ? t->second.project(annotation) : annotation;
    s.exported_at = at;
    out.push_back(std::move(s));
  }
  return out;
}

void Bank::write_export(const std::filesystem::path& path,
                        const std::vector<KnowledgeSample>& samples) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  for (const auto& s : samples) out << to_json(s).dump() << '\n';
}

std::vector<KnowledgeSample> Bank::read_export(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot read " + path.string());
  std::vector<KnowledgeSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(Errc::IoError, path.string() + ": bad export line");
    out.push_back(sample_from_json(j));
  }
  return out;
}

PromptVersion Bank::optimize_prompt(const std::string& agent, Runtime& runtime,
                                    const std::optional<std::string>& binding) {
  const auto spec = runtime.registry().resolve(agent);
  if (spec.kind != NodeKind::Agent) throw Error(Errc::InvalidArgument, agent + " is not an agent");

  std::vector<Json> excerpts;
  for (const auto& r : records(ReviewState::Approved)) {
    if (std::find(r.nodes.begin(), r.nodes.end(), agent) == r.nodes.end()) continue;
    Json excerpt{{"annotation", r.annotation.value_or(Json::object())}};
    if (traces_->contains(r.trace_ref.trace_id))
      excerpt["calls"] = trace_export(*traces_, r.trace_ref.trace_id, r.trace_ref.version_id)["calls"];
    excerpts.push_back(std::move(excerpt));
    if (excerpts.size() == kOptimizerExcerpts) break;
  }
  if (excerpts.empty()) throw Error(Errc::NoApprovedTraces, "no approved traces involve " + agent);

  std::string model = binding.value_or("");
  if (model.empty() && runtime.models().contains(kOptimizerBinding)) model = kOptimizerBinding;
  if (model.empty()) {
    const auto llm = runtime.registry().resolve(spec.config.value("llm", ""));
    model = llm.config.value("binding", "");
  }
  const auto current = spec.config.value("system_prompt", "");
  auto text = runtime.models().complete(model, render_optimizer_prompt(agent, current, excerpts));
  const auto ws = " \t\r\n";
  text.erase(0, text.find_first_not_of(ws));
  text.erase(text.find_last_not_of(ws) + 1);

  std::lock_guard lock(mutex_);
  auto& versions = prompts_[agent];
  const auto at = now_ms();
  if (versions.empty()) {
    PromptVersion original{agent, 1, current, std::nullopt, "initial prompt", true, at};
    append({{"event", "prompt_version"}, {"version", to_json(original)}});
    versions.push_back(original);
  }
  std::optional<int> parent;
  for (const auto& v : versions)
    if (v.applied) parent = v.version;
  PromptVersion next{agent,
                     versions.back().version + 1,
                     text,
                     parent,
                     std::string(kOptimizerTemplateVersion) + " over " +
                         std::to_string(excerpts.size()) + " approved trace(s)",
                     false,
                     at};
  append({{"event", "prompt_version"}, {"version", to_json(next)}});
  versions.push_back(next);
  return next;
}

PromptVersion Bank::apply_prompt(const std::string& agent, int version, Runtime& runtime) {
  std::lock_guard lock(mutex_);
  auto it = prompts_.find(agent);
  if (it == prompts_.end())
    throw Error(Errc::InvalidArgument, "no prompt versions for " + agent);
  auto& versions = it->second;
  auto chosen = std::find_if(versions.begin(), versions.end(),
                             [&](const PromptVersion& v) { return v.version == version; });
  if (chosen == versions.end())
    throw Error(Errc::InvalidArgument, agent + " has no prompt version " + std::to_string(version));
  runtime.registry().set_system_prompt(agent, chosen->text);
  Json event{{"event", "prompt_applied"}, {"agent", agent}, {"version", version}, {"at", now_ms()}};
  append(event);
  replay(event);
  return *chosen;
}

std::vector<PromptVersion> Bank::prompt_versions(const std::string& agent) const {
  std::lock_guard lock(mutex_);
  auto it = prompts_.find(agent);
  return it == prompts_.end() ? std::vector<PromptVersion>{} : it->second;
}

void Bank::restore_prompts(Runtime& runtime) const {
  std::lock_guard lock(mutex_);
  for (const auto& [agent, versions] : prompts_) {
    if (!runtime.registry().contains(agent)) continue;
    for (const auto& v : versions)
      if (v.applied) runtime.registry().set_system_prompt(agent, v.text);
  }
}

}  // namespace oxy
