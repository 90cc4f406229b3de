#pragma once

#include <functional>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include "oxy/core/types.hpp"

namespace oxy {

/// What a handler sees at a joinpoint. `arguments` and `output` are copies;
/// edits to them never reach the payload. Only `annotations` is kept, and it
/// goes to the trace event of this joinpoint.
struct JoinpointContext {
  std::string node;
  NodeKind kind;
  LifecycleStage stage;
  Phase phase;
  std::string call_id;
  std::string trace_id;
  Json arguments;
  Json output;  // null before FormatOutput/After
  Json annotations = Json::object();
};

using AspectSelector = std::function<bool(std::string_view node, NodeKind kind)>;
using AspectHandler = std::function<void(JoinpointContext&)>;

struct Aspect {
  std::string aspect_id;  // assigned on registration when empty
  LifecycleStage stage = LifecycleStage::Execute;
  Phase phase = Phase::Before;
  AspectSelector selector;
  AspectHandler handler;
};

AspectSelector select_all();
AspectSelector select_kind(NodeKind kind);
AspectSelector select_node(std::string name);

class AspectRegistry {
 public:
  /// Throws InvalidSelector when selector or handler is empty.
  std::string add(Aspect aspect);
  bool remove(std::string_view aspect_id);

  /// Runs matching aspects in registration order; returns merged annotations
  /// keyed by aspect id.
  Json fire(LifecycleStage stage, Phase phase, const OxyRequest& request, NodeKind kind,
            const Json* output) const;

  bool empty() const;

 private:
  mutable std::shared_mutex mutex_;
  std::vector<Aspect> aspects_;
};

}  // namespace oxy
