#include "oxy/error.hpp"

namespace oxy {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::NameConflict: return "NameConflict";
    case Errc::InvalidSpec: return "InvalidSpec";
    case Errc::NodeNotFound: return "NodeNotFound";
    case Errc::InvalidSelector: return "InvalidSelector";
    case Errc::MissingGroupId: return "MissingGroupId";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::ModelUnavailable: return "ModelUnavailable";
    case Errc::NoRuleMatched: return "NoRuleMatched";
    case Errc::RetryExhausted: return "RetryExhausted";
    case Errc::SealedTrace: return "SealedTrace";
    case Errc::UnsealedTrace: return "UnsealedTrace";
    case Errc::UnknownTrace: return "UnknownTrace";
    case Errc::UnknownCall: return "UnknownCall";
    case Errc::OverrideInvalid: return "OverrideInvalid";
    case Errc::InvalidTransition: return "InvalidTransition";
    case Errc::TemplateViolation: return "TemplateViolation";
    case Errc::UnknownRecord: return "UnknownRecord";
    case Errc::UnknownTemplate: return "UnknownTemplate";
    case Errc::NoApprovedTraces: return "NoApprovedTraces";
    case Errc::NoEntrypoint: return "NoEntrypoint";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace oxy
