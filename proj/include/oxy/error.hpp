#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace oxy {

enum class Errc {
  NameConflict,
  InvalidSpec,
  NodeNotFound,
  InvalidSelector,
  MissingGroupId,
  InvalidArgument,
  ModelUnavailable,
  NoRuleMatched,
  RetryExhausted,
  SealedTrace,
  UnsealedTrace,
  UnknownTrace,
  UnknownCall,
  OverrideInvalid,
  InvalidTransition,
  TemplateViolation,
  UnknownRecord,
  UnknownTemplate,
  NoApprovedTraces,
  NoEntrypoint,
  ConfigError,
  IoError,
};

std::string_view to_string(Errc code) noexcept;

/// The single exception type crossing module boundaries. Call-time failures
/// inside the lifecycle never escape; they become error responses.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace oxy
