#include "oxy/bank/review.hpp"

#include "oxy/error.hpp"

namespace oxy {

std::string_view to_string(ReviewState s) noexcept {
  switch (s) {
    case ReviewState::Pending: return "pending";
    case ReviewState::Annotated: return "annotated";
    case ReviewState::Approved: return "approved";
    case ReviewState::Rejected: return "rejected";
  }
  return "pending";
}

std::string_view to_string(ReviewAction a) noexcept {
  switch (a) {
    case ReviewAction::Annotate: return "annotate";
    case ReviewAction::Approve: return "approve";
    case ReviewAction::Reject: return "reject";
    case ReviewAction::Reopen: return "reopen";
  }
  return "annotate";
}

std::string_view to_string(Priority p) noexcept {
  switch (p) {
    case Priority::P0: return "P0";
    case Priority::P1: return "P1";
    case Priority::P2: return "P2";
  }
  return "P2";
}

std::optional<ReviewState> parse_review_state(std::string_view text) noexcept {
  for (auto s : kAllReviewStates)
    if (to_string(s) == text) return s;
  return std::nullopt;
}

std::optional<Priority> parse_priority(std::string_view text) noexcept {
  for (auto p : {Priority::P0, Priority::P1, Priority::P2})
    if (to_string(p) == text) return p;
  return std::nullopt;
}

std::optional<ReviewState> next_state(ReviewState from, ReviewAction action) noexcept {
  using S = ReviewState;
  switch (action) {
    case ReviewAction::Annotate:
      if (from == S::Pending) return S::Annotated;
      break;
    case ReviewAction::Approve:
      if (from == S::Annotated) return S::Approved;
      break;
    case ReviewAction::Reject:
      if (from == S::Pending || from == S::Annotated) return S::Rejected;
      break;
    case ReviewAction::Reopen:
      if (from == S::Rejected) return S::Pending;
      break;
  }
  return std::nullopt;
}

namespace {

std::string_view to_string(FieldType t) {
  switch (t) {
    case FieldType::Text: return "text";
    case FieldType::Label: return "label";
    case FieldType::Score: return "score";
  }
  return "text";
}

bool type_matches(FieldType type, const Json& v) {
  switch (type) {
    case FieldType::Text: return v.is_string();
    case FieldType::Score: return v.is_number();
    case FieldType::Label:
      if (v.is_string()) return true;
      if (!v.is_array()) return false;
      for (const auto& item : v)
        if (!item.is_string()) return false;
      return true;
  }
  return false;
}

}  // namespace

void AnnotationTemplate::check(const Json& payload) const {
  if (!payload.is_object())
    throw Error(Errc::TemplateViolation, template_id + ": payload must be an object");
  for (const auto& field : fields) {
    auto it = payload.find(field.name);
    if (it == payload.end() || it->is_null()) {
      if (field.required)
        throw Error(Errc::TemplateViolation, template_id + ": missing required field '" + field.name + "'");
      continue;
    }
    if (!type_matches(field.type, *it))
      throw Error(Errc::TemplateViolation, template_id + ": field '" + field.name + "' must be " +
                                               std::string(to_string(field.type)));
  }
}

Json AnnotationTemplate::project(const Json& payload) const {
  Json out = Json::object();
  for (const auto& field : fields)
    if (payload.contains(field.name)) out[field.name] = payload[field.name];
  return out;
}

AnnotationTemplate qa_template() {
  return {"qa",
          {{"question", FieldType::Text, true},
           {"answer", FieldType::Text, true},
           {"tags", FieldType::Label, false}}};
}

AnnotationTemplate template_from_json(const Json& j) {
  AnnotationTemplate t;
  try {
    t.template_id = j.at("template_id").get<std::string>();
    for (const auto& f : j.at("fields")) {
      TemplateField field;
      field.name = f.at("name").get<std::string>();
      const auto type = f.value("type", std::string("text"));
      if (type == "text") field.type = FieldType::Text;
      else if (type == "label") field.type = FieldType::Label;
      else if (type == "score") field.type = FieldType::Score;
      else throw Error(Errc::ConfigError, "unknown field type '" + type + "'");
      field.required = f.value("required", false);
      t.fields.push_back(std::move(field));
    }
  } catch (const Json::exception& e) {
    throw Error(Errc::ConfigError, std::string("template: ") + e.what());
  }
  if (t.template_id.empty()) throw Error(Errc::ConfigError, "template_id must not be empty");
  return t;
}

Json to_json(const AnnotationTemplate& t) {
  Json fields = Json::array();
  for (const auto& f : t.fields)
    fields.push_back({{"name", f.name}, {"type", to_string(f.type)}, {"required", f.required}});
  return {{"template_id", t.template_id}, {"fields", fields}};
}

}  // namespace oxy
