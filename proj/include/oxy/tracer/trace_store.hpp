#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "oxy/tracer/trace_event.hpp"

namespace oxy {

/// Lineage entry of one trace version.
struct TraceVersion {
  std::string version_id;
  std::optional<std::string> parent_version;
  double created_at = 0;
  Json override_description;  // {"call_id":..., "overrides":{...}} for regenerations
  Json origin = Json::object();
  bool sealed = false;
  // Parent seq ranges [first, last] inherited by reference.
  std::vector<std::pair<std::uint64_t, std::uint64_t>> inherited;
};

Json to_json(const TraceVersion& v);

/// Append-only event log. Layout under `root`:
///   traces/<trace_id>/index.json            versions + lineage
///   traces/<trace_id>/registry.json         registry snapshot at run start
///   traces/<trace_id>/<version_id>.jsonl    events (child versions start with
///                                           an "inherit" header line)
/// An empty root keeps everything in memory.
class TraceStore {
 public:
  explicit TraceStore(std::filesystem::path root = {});
  ~TraceStore();

  TraceStore(const TraceStore&) = delete;
  TraceStore& operator=(const TraceStore&) = delete;

  /// Opens a new trace with its root version; returns {trace_id, version_id}.
  std::pair<std::string, std::string> open_trace(const Json& registry_snapshot,
                                                 Json origin = Json::object());

  /// Opens a child version inheriting the given parent seqs by reference.
  std::string open_version(const std::string& trace_id, const std::string& parent_version,
                           const std::vector<std::uint64_t>& inherited_seqs,
                           Json override_description, Json origin);

  /// Assigns seq, appends, flushes. Unknown trace ids open a new trace
  /// implicitly. Throws SealedTrace.
  std::uint64_t record(TraceEvent event);

  void seal(const std::string& trace_id, const std::string& version_id);

  bool contains(const std::string& trace_id) const;
  std::vector<std::string> list_traces() const;
  std::string root_version(const std::string& trace_id) const;
  std::vector<TraceVersion> versions(const std::string& trace_id) const;
  TraceVersion version(const std::string& trace_id, const std::string& version_id) const;
  bool sealed(const std::string& trace_id, const std::string& version_id) const;
  Json registry_snapshot(const std::string& trace_id) const;

  /// Materialized view: inherited events renumbered densely, then own events.
  std::vector<TraceEvent> events(const std::string& trace_id,
                                 const std::string& version_id) const;

  /// Delivers events with seq >= from_seq in order, then live ones until the
  /// version is sealed or `sink` returns false. Throws UnknownTrace.
  void stream(const std::string& trace_id, const std::string& version_id,
              std::uint64_t from_seq, const std::function<bool(const TraceEvent&)>& sink,
              std::chrono::milliseconds max_wait = std::chrono::minutes{10}) const;

  /// Path of the version's JSONL log (empty when in-memory).
  std::filesystem::path log_path(const std::string& trace_id,
                                 const std::string& version_id) const;

  const std::filesystem::path& root() const { return root_; }

 private:
  struct Version;
  struct Trace;

  std::shared_ptr<Trace> find(const std::string& trace_id) const;
  std::shared_ptr<Trace> require(const std::string& trace_id) const;
  std::shared_ptr<Trace> load(const std::string& trace_id) const;
  void write_index(const Trace& trace) const;
  std::filesystem::path trace_dir(const std::string& trace_id) const;

  std::filesystem::path root_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::shared_ptr<Trace>> traces_;
};

}  // namespace oxy
