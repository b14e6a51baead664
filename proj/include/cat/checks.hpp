#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace cat::checks {

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Check {
  std::string name;
  double budget_seconds;  // exceeding it fails the check
  std::function<Outcome()> run;
};

/// The end-to-end criteria: params, flops, window-sweep, attention-oracle,
/// shift-mask-oracle, gradient, structural, overfit, metrics.
const std::vector<Check>& all_checks();

/// Runs every check whose name contains `filter` (all when empty), printing
/// one PASS/FAIL line each. Returns true iff at least one ran and all passed.
bool run_checks(const std::string& filter, std::ostream& out);

}  // namespace cat::checks
