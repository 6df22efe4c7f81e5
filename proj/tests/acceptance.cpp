// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Optional arguments select criteria by id.
#include <algorithm>
#include <cstdlib>
#include <iostream>

#include "nolab/acceptance.hpp"

int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  const auto suite = nolab::acceptance_suite();
  int failed = 0;
  for (std::size_t i = 0; i < suite.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto r = nolab::run_criterion(suite[i]);
    std::cout << nolab::format_result(r) << std::endl;
    failed += !r.pass;
  }
  if (failed) std::cout << "FAILED " << failed << " criteria" << std::endl;
  else std::cout << "ALL PASSED" << std::endl;
  return failed ? 1 : 0;
}
