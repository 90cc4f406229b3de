#include "oxy/tools/builtin.hpp"

#include <cctype>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "oxy/bank/bank.hpp"
#include "oxy/error.hpp"

namespace oxy {
namespace {

class ExpressionParser {
 public:
  explicit ExpressionParser(std::string_view text) : text_(text) {}

  double parse() {
    const double value = sum();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return value;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(Errc::InvalidArgument,
                "bad expression at offset " + std::to_string(pos_) + ": " + what);
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool take(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  double sum() {
    double value = product();
    while (true) {
      if (take('+')) value += product();
      else if (take('-')) value -= product();
      else return value;
    }
  }

  double product() {
    double value = unary();
    while (true) {
      if (take('*')) {
        value *= unary();
      } else if (take('/')) {
        const double d = unary();
        if (d == 0) fail("division by zero");
        value /= d;
      } else {
        return value;
      }
    }
  }

  double unary() {
    if (take('-')) return -unary();
    if (take('+')) return unary();
    return power();
  }

  double power() {
    const double base = atom();
    if (take('^')) return std::pow(base, unary());
    return base;
  }

  double atom() {
    if (take('(')) {
      const double value = sum();
      if (!take(')')) fail("expected ')'");
      return value;
    }
    skip_space();
    const auto start = pos_;
    while (pos_ < text_.size() &&
           (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.'))
      ++pos_;
    if (start == pos_) fail(pos_ < text_.size() ? "unexpected '" + std::string(1, text_[pos_]) + "'"
                                                : "unexpected end");
    const std::string number(text_.substr(start, pos_ - start));
    std::size_t used = 0;
    double value = 0;
    try {
      value = std::stod(number, &used);
    } catch (const std::exception&) {
      fail("bad number '" + number + "'");
    }
    if (used != number.size()) fail("bad number '" + number + "'");
    return value;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

std::string string_arg(const ToolContext& ctx, const char* key) {
  if (ctx.request.arguments.contains(key)) {
    const auto& v = ctx.request.arguments[key];
    if (!v.is_string()) throw Error(Errc::InvalidArgument, std::string(key) + " must be a string");
    return v.get<std::string>();
  }
  if (ctx.params.contains(key) && ctx.params[key].is_string()) return ctx.params[key].get<std::string>();
  throw Error(Errc::InvalidArgument, std::string("missing argument '") + key + "'");
}

std::string normalize_text(std::string_view text) {
  std::string out;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) out.push_back(static_cast<char>(std::tolower(u)));
    else if (!out.empty() && out.back() != ' ') out.push_back(' ');
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::filesystem::path confined(const ToolContext& ctx, const std::string& relative) {
  namespace fs = std::filesystem;
  const fs::path root = fs::weakly_canonical(ctx.params.value("root", std::string(".")));
  const fs::path target = fs::weakly_canonical(root / relative);
  const auto rel = target.lexically_relative(root);
  if (rel.empty() || *rel.begin() == "..")
    throw Error(Errc::InvalidArgument, "path '" + relative + "' is outside the tool root");
  return target;
}

Json echo(ToolContext& ctx) { return ctx.request.arguments; }

Json constant(ToolContext& ctx) { return ctx.params.value("value", Json()); }

Json clock(ToolContext& ctx) {
  if (ctx.params.contains("fixed")) return ctx.params["fixed"];
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[8];
  std::strftime(buf, sizeof buf, "%H:%M", &tm);
  return std::string(buf);
}

Json calculator(ToolContext& ctx) {
  const double value = evaluate_expression(string_arg(ctx, "expression"));
  if (std::isfinite(value) && value == std::floor(value) && std::fabs(value) < 9e15)
    return static_cast<long long>(value);
  return value;
}

Json knowledge_lookup(ToolContext& ctx) {
  const auto question = normalize_text(string_arg(ctx, "question"));
  const auto path = ctx.params.value("path", std::string());
  if (path.empty()) throw Error(Errc::InvalidArgument, "knowledge_lookup needs a 'path' param");
  if (!std::filesystem::exists(path)) throw Error(Errc::IoError, "no knowledge file " + path);
  for (const auto& sample : Bank::read_export(path)) {
    const auto known = normalize_text(sample.payload.value("question", ""));
    if (known.empty()) continue;
    if (known == question || question.find(known) != std::string::npos)
      return sample.payload.value("answer", Json());
  }
  throw Error(Errc::InvalidArgument, "no knowledge for '" + question + "'");
}

Json read_file(ToolContext& ctx) {
  const auto path = confined(ctx, string_arg(ctx, "path"));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot read " + path.filename().string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Json list_dir(ToolContext& ctx) {
  const auto rel = ctx.request.arguments.value("path", std::string("."));
  const auto dir = rel == "." ? std::filesystem::weakly_canonical(ctx.params.value("root", std::string(".")))
                              : confined(ctx, rel);
  if (!std::filesystem::is_directory(dir)) throw Error(Errc::IoError, "not a directory: " + rel);
  std::vector<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    names.push_back(entry.path().filename().string() + (entry.is_directory() ? "/" : ""));
  std::sort(names.begin(), names.end());
  return names;
}

Json sleep(ToolContext& ctx) {
  const int ms = ctx.request.arguments.value("ms", ctx.params.value("ms", 0));
  std::this_thread::sleep_for(std::chrono::milliseconds(ms));
  return Json{{"slept_ms", ms}};
}

Json fail(ToolContext& ctx) {
  throw Error(Errc::InvalidArgument, ctx.params.value("message", std::string("tool failed")));
}

}  // namespace

double evaluate_expression(std::string_view expression) {
  return ExpressionParser(expression).parse();
}

void register_builtin_tools(Runtime& runtime) {
  runtime.register_tool_handler("echo", echo);
  runtime.register_tool_handler("constant", constant);
  runtime.register_tool_handler("clock", clock);
  runtime.register_tool_handler("calculator", calculator);
  runtime.register_tool_handler("knowledge_lookup", knowledge_lookup);
  runtime.register_tool_handler("read_file", read_file);
  runtime.register_tool_handler("list_dir", list_dir);
  runtime.register_tool_handler("sleep", sleep);
  runtime.register_tool_handler("fail", fail);
}

}  // namespace oxy
