#pragma once

#include <string_view>

#include "oxy/core/runtime.hpp"

namespace oxy {

/// Arithmetic over + - * / ^, parentheses and unary minus. Throws InvalidArgument.
double evaluate_expression(std::string_view expression);

/// Registers the in-process handlers: echo, constant, clock, calculator,
/// knowledge_lookup, read_file, list_dir, sleep, fail.
void register_builtin_tools(Runtime& runtime);

}  // namespace oxy
