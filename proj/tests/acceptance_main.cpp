// Runs every acceptance criterion against the default configuration and
// prints one PASS/FAIL line per criterion. Exit status is non-zero if any
// criterion fails.

#include "spinhover/acceptance.hpp"

#include <iostream>

int main() {
  const spinhover::Config config = spinhover::default_config();
  const auto results = spinhover::run_acceptance(config, {}, &std::cout);
  int failed = 0;
  for (const auto& r : results) failed += !r.passed;
  std::cout << (results.size() - failed) << "/" << results.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
