// Runs every acceptance criterion and prints one PASS/FAIL line per
// criterion. Exit status is nonzero when any selected criterion fails.
//
//   acceptance [--only 1,3-5] [--quiet]

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <string>

#include "stp/checks.hpp"

int main(int argc, char** argv) {
  namespace checks = stp::checks;
  std::vector<int> selected;
  bool quiet = false;
  try {
    for (int i = 1; i < argc; ++i) {
      if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
        selected = checks::parse_selection(argv[++i]);
      } else if (std::strcmp(argv[i], "--quiet") == 0) {
        quiet = true;
      } else {
        std::cerr << "usage: acceptance [--only LIST] [--quiet]\n";
        return 2;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  checks::Options options;
  options.progress = quiet ? nullptr : &std::cout;
  options.scratch = std::filesystem::temp_directory_path() / "stp_acceptance";

  std::size_t failed = 0, ran = 0;
  std::string summary;
  for (const auto& criterion : checks::criteria()) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), criterion.id) == selected.end()) continue;
    std::cout << "running criterion " << criterion.id << " (" << criterion.name << ")" << std::endl;
    auto outcome = checks::run(criterion, options);
    std::cout << checks::format_outcome(criterion, outcome) << std::flush;
    summary += "criterion " + std::to_string(criterion.id) + ": " + (outcome.passed ? "PASS" : "FAIL") + "\n";
    ++ran;
    if (!outcome.passed) ++failed;
  }
  std::filesystem::remove_all(options.scratch);
  std::cout << "\nsummary\n" << summary << (ran - failed) << "/" << ran << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
