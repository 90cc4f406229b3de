#include "oxy/tracer/trace_event.hpp"

#include "oxy/error.hpp"
#include "oxy/md5.hpp"

namespace oxy {

Json to_json(const TraceEvent& e) {
  return Json{{"trace_id", e.trace_id},
              {"version_id", e.version_id},
              {"seq", e.seq},
              {"call_id", e.call_id},
              {"parent_call_id", e.parent_call_id ? Json(*e.parent_call_id) : Json()},
              {"node", e.node},
              {"node_kind", to_string(e.node_kind)},
              {"stage", to_string(e.stage)},
              {"phase", to_string(e.phase)},
              {"ts_ms", e.ts_ms},
              {"payload", e.payload}};
}

TraceEvent event_from_json(const Json& j) {
  TraceEvent e;
  e.trace_id = j.at("trace_id").get<std::string>();
  e.version_id = j.value("version_id", "");
  e.seq = j.value("seq", std::uint64_t{0});
  e.call_id = j.at("call_id").get<std::string>();
  if (const auto& p = j.value("parent_call_id", Json()); p.is_string()) e.parent_call_id = p;
  e.node = j.at("node").get<std::string>();
  const auto kind = parse_node_kind(j.at("node_kind").get<std::string>());
  const auto stage = parse_stage(j.at("stage").get<std::string>());
  const auto phase = parse_phase(j.at("phase").get<std::string>());
  if (!kind || !stage || !phase) throw Error(Errc::InvalidArgument, "malformed trace event");
  e.node_kind = *kind;
  e.stage = *stage;
  e.phase = *phase;
  e.ts_ms = j.value("ts_ms", 0.0);
  e.payload = j.value("payload", Json::object());
  return e;
}

Json snapshot_value(const Json& value) {
  const auto text = canonical_dump(value);
  if (text.size() <= kSnapshotLimit) return value;
  std::size_t cut = kSnapshotPreview;
  while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
  return Json{{"$truncated", true},
              {"md5", md5_hex(text)},
              {"bytes", text.size()},
              {"preview", text.substr(0, cut)}};
}

bool is_truncated_snapshot(const Json& value) {
  return value.is_object() && value.value("$truncated", false);
}

}  // namespace oxy
