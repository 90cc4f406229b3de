#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "oxy/json.hpp"

namespace oxy {

enum class ReviewState { Pending, Annotated, Approved, Rejected };
enum class ReviewAction { Annotate, Approve, Reject, Reopen };
enum class Priority { P0, P1, P2 };

inline constexpr ReviewState kAllReviewStates[] = {ReviewState::Pending, ReviewState::Annotated,
                                                   ReviewState::Approved, ReviewState::Rejected};
inline constexpr ReviewAction kAllReviewActions[] = {ReviewAction::Annotate, ReviewAction::Approve,
                                                     ReviewAction::Reject, ReviewAction::Reopen};

std::string_view to_string(ReviewState s) noexcept;
std::string_view to_string(ReviewAction a) noexcept;
std::string_view to_string(Priority p) noexcept;
std::optional<ReviewState> parse_review_state(std::string_view text) noexcept;
std::optional<Priority> parse_priority(std::string_view text) noexcept;

/// The gating table. Approved is terminal; Rejected -> Pending is the reopen
/// extension.
std::optional<ReviewState> next_state(ReviewState from, ReviewAction action) noexcept;

enum class FieldType { Text, Label, Score };

struct TemplateField {
  std::string name;
  FieldType type = FieldType::Text;
  bool required = false;
};

struct AnnotationTemplate {
  std::string template_id;
  std::vector<TemplateField> fields;

  /// Throws TemplateViolation.
  void check(const Json& payload) const;
  /// Keeps only declared fields.
  Json project(const Json& payload) const;
};

/// {question: text required, answer: text required, tags: label}
AnnotationTemplate qa_template();
AnnotationTemplate template_from_json(const Json& j);
Json to_json(const AnnotationTemplate& t);

}  // namespace oxy
