#pragma once

#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "evcs/config.hpp"

namespace evcs::acceptance {

struct CriterionResult {
  std::string id;
  std::string title;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct Options {
  config::RunConfig cfg = config::defaults();
  std::filesystem::path work_dir = std::filesystem::temp_directory_path() / "evcs-acceptance";
  std::set<std::string> only;  // criterion ids; empty runs all
};

// Runs the acceptance checks in order, printing one PASS/FAIL line per
// criterion to `out` as each completes.
std::vector<CriterionResult> run(const Options& opts, std::ostream& out);

}  // namespace evcs::acceptance
