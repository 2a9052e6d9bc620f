#pragma once

// Acceptance checks. Each one builds its own oracle from first principles and
// compares the library against it within a wall-clock budget.

#include <functional>
#include <string>
#include <vector>

namespace onorm::checks {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
  double limit_seconds = 0.0;
};

struct Check {
  int id;
  std::string name;
  double limit_seconds;
  bool fast;  // part of the CLI selftest
  // Returns {passed, detail}; timing is handled by run().
  std::function<std::pair<bool, std::string>()> body;
};

const std::vector<Check>& all_checks();

// Runs the check and fails it if it overran its budget or threw.
CheckResult run(const Check& check);

// "PASS  3 name (0.12 s) detail"
std::string format(const CheckResult& r);

}  // namespace onorm::checks
