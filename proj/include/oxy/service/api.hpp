#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "oxy/bank/bank.hpp"
#include "oxy/core/config.hpp"
#include "oxy/core/runtime.hpp"
#include "oxy/error.hpp"

namespace oxy {

/// One endpoint result: HTTP status plus the {ok, data | error} envelope.
struct ApiResult {
  int http_status = 200;
  Json envelope;

  bool ok() const { return envelope.value("ok", false); }
  const Json& data() const { return envelope.at("data"); }
};

ApiResult api_ok(Json data, int http_status = 200);
ApiResult api_error(int http_status, std::string_view code, std::string_view message,
                    Json extra = nullptr);
/// HTTP status for an error code.
int http_status_for(Errc code) noexcept;

struct ApiOptions {
  std::filesystem::path store = "oxy_store";
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> templates_dir;
};

/// Operations shared by the HTTP service and the CLI. Every method maps one
/// module operation onto an envelope; nothing throws.
class Api {
 public:
  explicit Api(const ApiOptions& options);

  Runtime& runtime() { return *runtime_; }
  Bank& bank() { return *bank_; }
  TraceStore& traces() { return *traces_; }
  bool configured() const { return configured_; }

  ApiResult chat(const std::string& query, const std::optional<std::string>& group_id);

  ApiResult list_traces();
  ApiResult graph(const std::string& trace_id, const std::optional<std::string>& version);
  ApiResult events(const std::string& trace_id, const std::optional<std::string>& version);
  ApiResult timing(const std::string& trace_id, const std::optional<std::string>& version);
  ApiResult dot(const std::string& trace_id, const std::optional<std::string>& version);
  ApiResult versions(const std::string& trace_id);
  ApiResult regenerate(const std::string& trace_id, const std::string& call_id,
                       const Json& overrides, const std::optional<std::string>& version);

  ApiResult add_breakpoint(const std::string& node, const std::string& stage);
  ApiResult remove_breakpoint(const std::string& node, const std::string& stage);
  ApiResult paused();
  ApiResult resume(const std::string& call_id, const Json& overrides);
  ApiResult request_scopes(const std::string& request_id, const std::optional<std::string>& group_id);

  ApiResult bank_records(const std::optional<std::string>& state);
  ApiResult bank_record(const std::string& record_id);
  ApiResult bank_deposit(const std::string& trace_id, const std::optional<std::string>& version);
  ApiResult bank_annotate(const std::string& record_id, const std::string& template_id,
                          const Json& payload);
  ApiResult bank_audit(const std::string& record_id, const std::string& verdict,
                       const std::string& note);
  ApiResult bank_reopen(const std::string& record_id);
  ApiResult bank_export(const std::optional<std::string>& priority,
                        const std::optional<std::string>& template_id,
                        const std::optional<double>& since);

  ApiResult optimize_prompt(const std::string& agent, const std::optional<std::string>& binding);
  ApiResult apply_prompt(const std::string& agent, int version);
  ApiResult prompt_versions(const std::string& agent);

  ApiResult topology();

 private:
  template <class F>
  ApiResult guarded(F&& body);
  std::string resolve_version(const std::string& trace_id, const std::optional<std::string>& version);

  std::shared_ptr<TraceStore> traces_;
  std::unique_ptr<Runtime> runtime_;
  std::unique_ptr<Bank> bank_;
  std::optional<std::string> entrypoint_;
  bool configured_ = false;
};

}  // namespace oxy
