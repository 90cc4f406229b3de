#include "oxy/core/breakpoints.hpp"

#include "oxy/ids.hpp"

namespace oxy {

Json to_json(const PausedCall& p) {
  return Json{{"call_id", p.call_id},
              {"trace_id", p.trace_id},
              {"node", p.node},
              {"stage", to_string(p.stage)},
              {"since_ms", p.since_ms}};
}

void Breakpoints::add(std::string node, LifecycleStage stage) {
  std::lock_guard lock(mutex_);
  points_.emplace(std::move(node), stage);
}

bool Breakpoints::remove(const std::string& node, LifecycleStage stage) {
  std::lock_guard lock(mutex_);
  return points_.erase({node, stage}) > 0;
}

void Breakpoints::clear() {
  std::lock_guard lock(mutex_);
  points_.clear();
}

std::vector<std::pair<std::string, LifecycleStage>> Breakpoints::list() const {
  std::lock_guard lock(mutex_);
  return {points_.begin(), points_.end()};
}

void Breakpoints::set_timeout(std::chrono::milliseconds timeout) {
  std::lock_guard lock(mutex_);
  timeout_ = timeout;
}

std::optional<CallOverrides> Breakpoints::pause_if_matched(const OxyRequest& request,
                                                           LifecycleStage stage) {
  std::unique_lock lock(mutex_);
  if (points_.empty() || !points_.contains({request.callee, stage})) return std::nullopt;
  auto& slot = paused_[request.call_id];
  slot.info = PausedCall{request.call_id, request.trace_id, request.callee, stage, now_ms()};
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  cv_.wait_until(lock, deadline, [&] { return paused_.at(request.call_id).resumed; });
  auto overrides = std::move(paused_.at(request.call_id).overrides);
  paused_.erase(request.call_id);
  return overrides;
}

bool Breakpoints::resume(const std::string& call_id, CallOverrides overrides) {
  {
    std::lock_guard lock(mutex_);
    auto it = paused_.find(call_id);
    if (it == paused_.end() || it->second.resumed) return false;
    it->second.resumed = true;
    it->second.overrides = std::move(overrides);
  }
  cv_.notify_all();
  return true;
}

std::vector<PausedCall> Breakpoints::paused() const {
  std::lock_guard lock(mutex_);
  std::vector<PausedCall> out;
  for (const auto& [id, slot] : paused_)
    if (!slot.resumed) out.push_back(slot.info);
  return out;
}

}  // namespace oxy
