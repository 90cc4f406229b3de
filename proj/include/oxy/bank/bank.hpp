#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "oxy/bank/review.hpp"
#include "oxy/model/model.hpp"
#include "oxy/tracer/trace_store.hpp"

namespace oxy {

class Runtime;

struct TraceRef {
  std::string trace_id;
  std::string version_id;
};

struct BankRecord {
  std::string record_id;
  std::string digest;
  TraceRef trace_ref;
  Priority priority = Priority::P2;
  int occurrence_count = 1;
  ReviewState state = ReviewState::Pending;
  std::optional<std::string> template_id;
  std::optional<Json> annotation;
  std::optional<std::string> audit_note;
  std::vector<std::string> nodes;  // node names appearing in the trace
  double deposited_at = 0;
  double state_changed_at = 0;
};

struct KnowledgeSample {
  std::string sample_id;
  std::string record_id;
  std::string template_id;
  Priority priority = Priority::P2;
  Json payload;
  double exported_at = 0;
};

struct PromptVersion {
  std::string agent;
  int version = 1;
  std::string text;
  std::optional<int> parent;
  std::string rationale;
  bool applied = false;
  double created_at = 0;
};

struct ExportFilter {
  std::optional<Priority> priority;
  std::optional<std::string> template_id;
  std::optional<double> since;
};

enum class Verdict { Approve, Reject };

Json to_json(const BankRecord& r);
Json to_json(const KnowledgeSample& s);
KnowledgeSample sample_from_json(const Json& j);
Json to_json(const PromptVersion& p);

/// MD5 over the canonical bytes of the export's "calls" list.
std::string canonical_digest(const Json& trace_export);

/// P0: rooted at the user; P1: rooted at an agent; P2: no agent call at all.
Priority infer_priority(const Json& trace_export);

inline constexpr std::string_view kOptimizerTemplateVersion = "optimize-v1";
inline constexpr std::size_t kOptimizerExcerpts = 5;
inline constexpr std::size_t kOptimizerExcerptBytes = 2 * 1024;
/// Binding used by optimize_prompt when registered and none is given;
/// otherwise the agent's own llm binding.
inline constexpr std::string_view kOptimizerBinding = "optimizer";

/// Meta-prompt asking for a refined system prompt.
std::vector<ChatMessage> render_optimizer_prompt(const std::string& agent,
                                                 const std::string& current_prompt,
                                                 const std::vector<Json>& excerpts);

/// Event-sourced asset bank. Every mutation is one line in
/// `<dir>/ledger.jsonl`; state is rebuilt from the ledger on construction.
class Bank {
 public:
  explicit Bank(std::shared_ptr<TraceStore> traces, std::filesystem::path dir = {});

  void add_template(AnnotationTemplate t);
  /// Loads every *.json template in `dir`.
  void load_templates(const std::filesystem::path& dir);
  std::vector<AnnotationTemplate> templates() const;

  /// Throws UnknownTrace, UnsealedTrace.
  BankRecord deposit(const std::string& trace_id,
                     const std::optional<std::string>& version_id = std::nullopt);
  /// Throws UnknownRecord, UnknownTemplate, InvalidTransition, TemplateViolation.
  BankRecord annotate(const std::string& record_id, const std::string& template_id,
                      const Json& payload);
  BankRecord audit(const std::string& record_id, Verdict verdict, const std::string& note = {});
  BankRecord reopen(const std::string& record_id);

  BankRecord record(const std::string& record_id) const;
  /// Ordered by (deposited_at, record_id).
  std::vector<BankRecord> records(std::optional<ReviewState> state = std::nullopt) const;

  /// Samples from Approved records only.
  std::vector<KnowledgeSample> export_knowledge(const ExportFilter& filter = {}) const;
  static void write_export(const std::filesystem::path& path,
                           const std::vector<KnowledgeSample>& samples);
  static std::vector<KnowledgeSample> read_export(const std::filesystem::path& path);

  /// Stores the optimizer completion as an unapplied version; the current
  /// prompt becomes version 1 on first use. Throws
  /// NoApprovedTraces, ModelUnavailable, NodeNotFound.
  PromptVersion optimize_prompt(const std::string& agent, Runtime& runtime,
                                const std::optional<std::string>& binding = std::nullopt);
  /// Marks `version` applied and hot-updates the registered agent.
  PromptVersion apply_prompt(const std::string& agent, int version, Runtime& runtime);
  std::vector<PromptVersion> prompt_versions(const std::string& agent) const;
  /// Re-applies every applied prompt to a freshly configured runtime.
  void restore_prompts(Runtime& runtime) const;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  void append(const Json& event);
  void replay(const Json& event);
  BankRecord& require(const std::string& record_id);
  BankRecord transition(const std::string& record_id, ReviewAction action, Json extra);

  std::shared_ptr<TraceStore> traces_;
  std::filesystem::path dir_;
  std::ofstream ledger_;
  mutable std::mutex mutex_;
  std::map<std::string, BankRecord> records_;
  std::map<std::string, std::string> by_digest_;
  std::map<std::string, AnnotationTemplate> templates_;
  std::map<std::string, std::vector<PromptVersion>> prompts_;
};

}  // namespace oxy
