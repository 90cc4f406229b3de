#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "oxy/core/types.hpp"

namespace oxy {

/// One lifecycle joinpoint of one call. JSONL field names are fixed:
/// trace_id, version_id, seq, call_id, parent_call_id, node, node_kind,
/// stage, phase, ts_ms, payload.
struct TraceEvent {
  std::string trace_id;
  std::string version_id;
  std::uint64_t seq = 0;
  std::string call_id;
  std::optional<std::string> parent_call_id;
  std::string node;
  NodeKind node_kind = NodeKind::Tool;
  LifecycleStage stage = LifecycleStage::PreProcess;
  Phase phase = Phase::Before;
  double ts_ms = 0;
  Json payload = Json::object();

  bool operator==(const TraceEvent&) const = default;
};

Json to_json(const TraceEvent& e);
TraceEvent event_from_json(const Json& j);

/// Snapshots above this many serialized bytes are replaced by a digest and a
/// truncated preview.
inline constexpr std::size_t kSnapshotLimit = 64 * 1024;
inline constexpr std::size_t kSnapshotPreview = 1024;

/// Stored form of a snapshot value.
Json snapshot_value(const Json& value);
bool is_truncated_snapshot(const Json& value);

}  // namespace oxy
