#pragma once

#include <string>

namespace oxy {

/// 128 random bits rendered as 32 lowercase hex characters (URL-safe).
std::string new_id();

/// Milliseconds since the Unix epoch with sub-millisecond resolution.
double now_ms();

}  // namespace oxy
