#pragma once

#include <chrono>
#include <condition_variable>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "oxy/core/types.hpp"

namespace oxy {

struct PausedCall {
  std::string call_id;
  std::string trace_id;
  std::string node;
  LifecycleStage stage;
  double since_ms = 0;
};

Json to_json(const PausedCall& p);

/// (node, stage) breakpoints. A matching call blocks before the stage until
/// resumed or until the timeout elapses, then continues.
class Breakpoints {
 public:
  void add(std::string node, LifecycleStage stage);
  bool remove(const std::string& node, LifecycleStage stage);
  void clear();
  std::vector<std::pair<std::string, LifecycleStage>> list() const;

  void set_timeout(std::chrono::milliseconds timeout);

  /// Blocks when (request.callee, stage) is a breakpoint; returns resume overrides.
  std::optional<CallOverrides> pause_if_matched(const OxyRequest& request, LifecycleStage stage);

  /// False when no call with this id is paused.
  bool resume(const std::string& call_id, CallOverrides overrides = {});

  std::vector<PausedCall> paused() const;

 private:
  struct Slot {
    PausedCall info;
    bool resumed = false;
    CallOverrides overrides;
  };

  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::set<std::pair<std::string, LifecycleStage>> points_;
  std::map<std::string, Slot> paused_;
  std::chrono::milliseconds timeout_{std::chrono::seconds{300}};
};

}  // namespace oxy
