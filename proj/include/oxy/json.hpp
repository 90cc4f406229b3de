#pragma once

#include <json.hpp>

namespace oxy {

using Json = nlohmann::json;

/// Canonical byte form: sorted keys, no insignificant whitespace, UTF-8.
inline std::string canonical_dump(const Json& value) {
  return value.dump(-1, ' ', false, Json::error_handler_t::replace);
}

}  // namespace oxy
