#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace stp::checks {

struct Outcome {
  bool passed = false;
  std::string summary;              // one line, shown next to PASS/FAIL
  std::vector<std::string> detail;  // raw measurements, one per line
  double seconds = 0.0;
};

struct Options {
  std::ostream* progress = nullptr;  // training progress, may be null
  std::filesystem::path scratch;     // temporary files; created on demand
};

struct Criterion {
  int id = 0;
  std::string name;
  bool trains_models = false;  // minutes rather than seconds
  double budget_seconds = 0.0;  // 0 means no wall-clock limit
  std::function<Outcome(const Options&)> run;
};

/// All acceptance criteria in numeric order.
const std::vector<Criterion>& criteria();

/// Runs one criterion, timing it and turning exceptions and budget overruns
/// into failures.
Outcome run(const Criterion& criterion, const Options& options);

/// Parses "1,3,5-7" into criterion ids; throws std::invalid_argument.
std::vector<int> parse_selection(const std::string& text);

/// `criterion N: PASS|FAIL name (summary, Xs)` plus indented detail lines.
std::string format_outcome(const Criterion& criterion, const Outcome& outcome);

}  // namespace stp::checks
