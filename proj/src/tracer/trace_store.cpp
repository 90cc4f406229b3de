#include "oxy/tracer/trace_store.hpp"

#include <algorithm>
#include <set>

#include "oxy/error.hpp"
#include "oxy/ids.hpp"

namespace oxy {

namespace fs = std::filesystem;

struct TraceStore::Version {
  TraceVersion meta;
  std::vector<TraceEvent> events;
  std::ofstream log;
  std::condition_variable cv;
};

struct TraceStore::Trace {
  std::string trace_id;
  std::string root_version;
  Json registry = Json::array();
  mutable std::mutex mutex;
  std::vector<std::unique_ptr<Version>> versions;  // creation order

  Version* find(const std::string& version_id) const {
    for (const auto& v : versions)
      if (v->meta.version_id == version_id) return v.get();
    return nullptr;
  }
  Version& require(const std::string& version_id) const {
    if (auto* v = find(version_id.empty() ? root_version : version_id)) return *v;
    throw Error(Errc::UnknownTrace, "trace " + trace_id + " has no version " + version_id);
  }
};

Json to_json(const TraceVersion& v) {
  Json ranges = Json::array();
  for (const auto& [first, last] : v.inherited) ranges.push_back({first, last});
  return Json{{"version_id", v.version_id},
              {"parent_version", v.parent_version ? Json(*v.parent_version) : Json()},
              {"created_at", v.created_at},
              {"override_description", v.override_description},
              {"origin", v.origin},
              {"sealed", v.sealed},
              {"inherited", ranges}};
}

namespace {

TraceVersion version_from_json(const Json& j) {
  TraceVersion v;
  v.version_id = j.at("version_id").get<std::string>();
  if (const auto& p = j.value("parent_version", Json()); p.is_string()) v.parent_version = p;
  v.created_at = j.value("created_at", 0.0);
  v.override_description = j.value("override_description", Json());
  v.origin = j.value("origin", Json::object());
  v.sealed = j.value("sealed", false);
  for (const auto& r : j.value("inherited", Json::array()))
    v.inherited.emplace_back(r.at(0).get<std::uint64_t>(), r.at(1).get<std::uint64_t>());
  return v;
}

std::vector<std::pair<std::uint64_t, std::uint64_t>> to_ranges(std::vector<std::uint64_t> seqs) {
  std::sort(seqs.begin(), seqs.end());
  seqs.erase(std::unique(seqs.begin(), seqs.end()), seqs.end());
  std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
  for (auto s : seqs) {
    if (!ranges.empty() && ranges.back().second + 1 == s)
      ranges.back().second = s;
    else
      ranges.emplace_back(s, s);
  }
  return ranges;
}

std::vector<TraceEvent> inherit(const std::vector<TraceEvent>& parent,
                                const std::vector<std::pair<std::uint64_t, std::uint64_t>>& ranges,
                                const std::string& version_id) {
  std::vector<TraceEvent> out;
  for (const auto& [first, last] : ranges) {
    for (auto s = first; s <= last && s < parent.size(); ++s) {
      TraceEvent e = parent[s];
      e.seq = out.size();
      e.version_id = version_id;
      out.push_back(std::move(e));
    }
  }
  return out;
}

void write_line(std::ofstream& out, const Json& j) {
  out << j.dump(-1, ' ', false, Json::error_handler_t::replace) << '\n';
  out.flush();
  if (!out) throw Error(Errc::IoError, "trace log write failed");
}

}  // namespace

TraceStore::TraceStore(fs::path root) : root_(std::move(root)) {
  if (!root_.empty()) fs::create_directories(root_ / "traces");
}

TraceStore::~TraceStore() = default;

fs::path TraceStore::trace_dir(const std::string& trace_id) const {
  return root_ / "traces" / trace_id;
}

fs::path TraceStore::log_path(const std::string& trace_id, const std::string& version_id) const {
  if (root_.empty()) return {};
  return trace_dir(trace_id) / (version_id + ".jsonl");
}

void TraceStore::write_index(const Trace& trace) const {
  if (root_.empty()) return;
  Json versions = Json::array();
  for (const auto& v : trace.versions) versions.push_back(to_json(v->meta));
  const Json index{{"trace_id", trace.trace_id},
                   {"root_version", trace.root_version},
                   {"versions", versions}};
  const auto dir = trace_dir(trace.trace_id);
  const auto tmp = dir / "index.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << index.dump(2);
    if (!out) throw Error(Errc::IoError, "cannot write trace index");
  }
  fs::rename(tmp, dir / "index.json");
}

std::pair<std::string, std::string> TraceStore::open_trace(const Json& registry_snapshot,
                                                           Json origin) {
  auto trace = std::make_shared<Trace>();
  trace->trace_id = new_id();
  trace->root_version = new_id();
  trace->registry = registry_snapshot;
  auto version = std::make_unique<Version>();
  version->meta.version_id = trace->root_version;
  version->meta.created_at = now_ms();
  version->meta.origin = std::move(origin);
  if (!root_.empty()) {
    const auto dir = trace_dir(trace->trace_id);
    fs::create_directories(dir);
    std::ofstream(dir / "registry.json") << registry_snapshot.dump(2);
    version->log.open(dir / (trace->root_version + ".jsonl"), std::ios::app);
  }
  trace->versions.push_back(std::move(version));
  write_index(*trace);
  std::lock_guard lock(mutex_);
  traces_.emplace(trace->trace_id, trace);
  return {trace->trace_id, trace->root_version};
}

std::string TraceStore::open_version(const std::string& trace_id,
                                     const std::string& parent_version,
                                     const std::vector<std::uint64_t>& inherited_seqs,
                                     Json override_description, Json origin) {
  auto trace = require(trace_id);
  std::lock_guard lock(trace->mutex);
  auto& parent = trace->require(parent_version);
  auto version = std::make_unique<Version>();
  version->meta.version_id = new_id();
  version->meta.parent_version = parent.meta.version_id;
  version->meta.created_at = now_ms();
  version->meta.override_description = std::move(override_description);
  version->meta.origin = std::move(origin);
  version->meta.inherited = to_ranges(inherited_seqs);
  version->events = inherit(parent.events, version->meta.inherited, version->meta.version_id);
  if (!root_.empty()) {
    version->log.open(log_path(trace_id, version->meta.version_id), std::ios::app);
    Json ranges = Json::array();
    for (const auto& [a, b] : version->meta.inherited) ranges.push_back({a, b});
    write_line(version->log,
               Json{{"inherit", {{"version", parent.meta.version_id}, {"seq_ranges", ranges}}}});
  }
  const auto id = version->meta.version_id;
  trace->versions.push_back(std::move(version));
  write_index(*trace);
  return id;
}

std::uint64_t TraceStore::record(TraceEvent event) {
  auto trace = find(event.trace_id);
  if (!trace) {
    // An event for an unknown trace opens it.
    trace = std::make_shared<Trace>();
    trace->trace_id = event.trace_id.empty() ? new_id() : event.trace_id;
    trace->root_version = event.version_id.empty() ? new_id() : event.version_id;
    auto version = std::make_unique<Version>();
    version->meta.version_id = trace->root_version;
    version->meta.created_at = now_ms();
    if (!root_.empty()) {
      fs::create_directories(trace_dir(trace->trace_id));
      version->log.open(log_path(trace->trace_id, trace->root_version), std::ios::app);
    }
    trace->versions.push_back(std::move(version));
    write_index(*trace);
    std::lock_guard lock(mutex_);
    auto [it, inserted] = traces_.emplace(trace->trace_id, trace);
    if (!inserted) trace = it->second;
  }
  std::lock_guard lock(trace->mutex);
  auto& version = trace->require(event.version_id);
  if (version.meta.sealed)
    throw Error(Errc::SealedTrace, "trace " + trace->trace_id + " version " +
                                       version.meta.version_id + " is sealed");
  event.trace_id = trace->trace_id;
  event.version_id = version.meta.version_id;
  event.seq = version.events.size();
  if (version.log.is_open()) write_line(version.log, to_json(event));
  version.events.push_back(std::move(event));
  version.cv.notify_all();
  return version.events.back().seq;
}

void TraceStore::seal(const std::string& trace_id, const std::string& version_id) {
  auto trace = require(trace_id);
  std::lock_guard lock(trace->mutex);
  auto& version = trace->require(version_id);
  if (version.meta.sealed) return;
  version.meta.sealed = true;
  if (version.log.is_open()) version.log.close();
  write_index(*trace);
  version.cv.notify_all();
}

std::shared_ptr<TraceStore::Trace> TraceStore::find(const std::string& trace_id) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = traces_.find(trace_id); it != traces_.end()) return it->second;
  }
  return load(trace_id);
}

std::shared_ptr<TraceStore::Trace> TraceStore::require(const std::string& trace_id) const {
  if (auto trace = find(trace_id)) return trace;
  throw Error(Errc::UnknownTrace, "unknown trace " + trace_id);
}

std::shared_ptr<TraceStore::Trace> TraceStore::load(const std::string& trace_id) const {
  if (root_.empty() || trace_id.empty() || trace_id.find('/') != std::string::npos ||
      trace_id.find("..") != std::string::npos)
    return nullptr;
  const auto dir = trace_dir(trace_id);
  std::ifstream index_in(dir / "index.json");
  if (!index_in) return nullptr;
  const auto index = Json::parse(index_in, nullptr, false);
  if (index.is_discarded()) throw Error(Errc::IoError, "corrupt index for trace " + trace_id);

  auto trace = std::make_shared<Trace>();
  trace->trace_id = trace_id;
  trace->root_version = index.at("root_version").get<std::string>();
  if (std::ifstream reg(dir / "registry.json"); reg) {
    trace->registry = Json::parse(reg, nullptr, false);
    if (trace->registry.is_discarded()) trace->registry = Json::array();
  }
  for (const auto& vj : index.at("versions")) {
    auto version = std::make_unique<Version>();
    version->meta = version_from_json(vj);
    std::ifstream in(dir / (version->meta.version_id + ".jsonl"));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = Json::parse(line, nullptr, false);
      if (j.is_discarded()) break;  // torn tail write
      if (j.contains("inherit")) {
        const auto parent_id = j["inherit"].at("version").get<std::string>();
        const auto* parent = trace->find(parent_id);
        if (!parent) throw Error(Errc::IoError, "version lineage broken in trace " + trace_id);
        version->events = inherit(parent->events, version->meta.inherited, version->meta.version_id);
        continue;
      }
      version->events.push_back(event_from_json(j));
    }
    if (!version->meta.sealed)
      version->log.open(dir / (version->meta.version_id + ".jsonl"), std::ios::app);
    trace->versions.push_back(std::move(version));
  }
  std::lock_guard lock(mutex_);
  auto [it, inserted] = traces_.emplace(trace_id, trace);
  return it->second;
}

bool TraceStore::contains(const std::string& trace_id) const { return find(trace_id) != nullptr; }

std::vector<std::string> TraceStore::list_traces() const {
  std::set<std::string> ids;
  {
    std::lock_guard lock(mutex_);
    for (const auto& [id, _] : traces_) ids.insert(id);
  }
  if (!root_.empty() && fs::exists(root_ / "traces"))
    for (const auto& entry : fs::directory_iterator(root_ / "traces"))
      if (fs::exists(entry.path() / "index.json")) ids.insert(entry.path().filename().string());
  return {ids.begin(), ids.end()};
}

std::string TraceStore::root_version(const std::string& trace_id) const {
  return require(trace_id)->root_version;
}

std::vector<TraceVersion> TraceStore::versions(const std::string& trace_id) const {
  auto trace = require(trace_id);
  std::lock_guard lock(trace->mutex);
  std::vector<TraceVersion> out;
  for (const auto& v : trace->versions) out.push_back(v->meta);
  return out;
}

TraceVersion TraceStore::version(const std::string& trace_id, const std::string& version_id) const {
  auto trace = require(trace_id);
  std::lock_guard lock(trace->mutex);
  return trace->require(version_id).meta;
}

bool TraceStore::sealed(const std::string& trace_id, const std::string& version_id) const {
  return version(trace_id, version_id).sealed;
}

Json TraceStore::registry_snapshot(const std::string& trace_id) const {
  auto trace = require(trace_id);
  std::lock_guard lock(trace->mutex);
  return trace->registry;
}

std::vector<TraceEvent> TraceStore::events(const std::string& trace_id,
                                           const std::string& version_id) const {
  auto trace = require(trace_id);
  std::lock_guard lock(trace->mutex);
  return trace->require(version_id).events;
}

void TraceStore::stream(const std::string& trace_id, const std::string& version_id,
                        std::uint64_t from_seq,
                        const std::function<bool(const TraceEvent&)>& sink,
                        std::chrono::milliseconds max_wait) const {
  auto trace = require(trace_id);
  Version* version = nullptr;
  {
    std::lock_guard lock(trace->mutex);
    version = &trace->require(version_id);
  }
  std::uint64_t next = from_seq;
  while (true) {
    std::vector<TraceEvent> batch;
    bool done = false;
    {
      std::unique_lock lock(trace->mutex);
      const bool ready = version->cv.wait_for(lock, max_wait, [&] {
        return version->events.size() > next || version->meta.sealed;
      });
      for (auto i = next; i < version->events.size(); ++i) batch.push_back(version->events[i]);
      done = !ready || version->meta.sealed;
    }
    for (const auto& e : batch) {
      if (!sink(e)) return;
      ++next;
    }
    if (done) return;
  }
}

}  // namespace oxy
