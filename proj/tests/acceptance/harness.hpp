#pragma once

#include <functional>
#include <sstream>
#include <string>
#include <vector>

namespace oxy::acceptance {

/// Collects failed expectations of one criterion.
class Check {
 public:
  void expect(bool condition, const std::string& what) {
    if (!condition) failures_.push_back(what);
  }
  template <class A, class B>
  void equal(const A& actual, const B& expected, const std::string& what) {
    if (actual == expected) return;
    std::ostringstream out;
    out << what << " (got " << actual << ", want " << expected << ")";
    failures_.push_back(out.str());
  }
  void note(std::string text) { notes_.push_back(std::move(text)); }

  bool passed() const { return failures_.empty(); }
  const std::vector<std::string>& failures() const { return failures_; }
  const std::vector<std::string>& notes() const { return notes_; }

 private:
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

struct Criterion {
  int number;
  std::string title;
  double time_limit_s;  // 0 when unbounded
  std::function<void(Check&)> run;
};

std::vector<Criterion> runtime_criteria();  // 1, 2, 3, 4, 5
std::vector<Criterion> trace_criteria();    // 8, 9
std::vector<Criterion> bank_criteria();     // 6, 7, 10
std::vector<Criterion> parity_criteria();   // 11

}  // namespace oxy::acceptance
