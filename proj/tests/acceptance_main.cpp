#include <cstring>
#include <iostream>

#include "evcs/acceptance.hpp"

int main(int argc, char** argv) {
  evcs::acceptance::Options opts;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--work-dir") == 0 && i + 1 < argc) {
      opts.work_dir = argv[++i];
    } else {
      opts.only.insert(argv[i]);
    }
  }
  const auto results = evcs::acceptance::run(opts, std::cout);
  for (const auto& r : results) {
    if (!r.passed) return 1;
  }
  return 0;
}
