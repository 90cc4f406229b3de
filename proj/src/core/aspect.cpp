#include "oxy/core/aspect.hpp"

#include <algorithm>

#include "oxy/error.hpp"
#include "oxy/ids.hpp"

namespace oxy {

AspectSelector select_all() {
  return [](std::string_view, NodeKind) { return true; };
}

AspectSelector select_kind(NodeKind kind) {
  return [kind](std::string_view, NodeKind k) { return k == kind; };
}

AspectSelector select_node(std::string name) {
  return [name = std::move(name)](std::string_view n, NodeKind) { return n == name; };
}

std::string AspectRegistry::add(Aspect aspect) {
  if (!aspect.selector) throw Error(Errc::InvalidSelector, "aspect selector is empty");
  if (!aspect.handler) throw Error(Errc::InvalidSelector, "aspect handler is empty");
  if (aspect.aspect_id.empty()) aspect.aspect_id = new_id();
  std::unique_lock lock(mutex_);
  for (const auto& existing : aspects_)
    if (existing.aspect_id == aspect.aspect_id)
      throw Error(Errc::InvalidSelector, "duplicate aspect id " + aspect.aspect_id);
  aspects_.push_back(std::move(aspect));
  return aspects_.back().aspect_id;
}

bool AspectRegistry::remove(std::string_view aspect_id) {
  std::unique_lock lock(mutex_);
  auto it = std::find_if(aspects_.begin(), aspects_.end(),
                         [&](const Aspect& a) { return a.aspect_id == aspect_id; });
  if (it == aspects_.end()) return false;
  aspects_.erase(it);
  return true;
}

bool AspectRegistry::empty() const {
  std::shared_lock lock(mutex_);
  return aspects_.empty();
}

Json AspectRegistry::fire(LifecycleStage stage, Phase phase, const OxyRequest& request,
                          NodeKind kind, const Json* output) const {
  std::vector<Aspect> matching;
  {
    std::shared_lock lock(mutex_);
    for (const auto& a : aspects_)
      if (a.stage == stage && a.phase == phase && a.selector(request.callee, kind))
        matching.push_back(a);
  }
  Json annotations = Json::object();
  for (const auto& aspect : matching) {
    JoinpointContext ctx{request.callee, kind,   stage, phase, request.call_id, request.trace_id,
                         request.arguments, output ? *output : Json()};
    try {
      aspect.handler(ctx);
    } catch (const std::exception& e) {
      ctx.annotations["aspect_error"] = e.what();
    }
    if (!ctx.annotations.empty()) annotations[aspect.aspect_id] = std::move(ctx.annotations);
  }
  return annotations;
}

}  // namespace oxy
