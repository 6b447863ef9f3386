#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tokenmask {

struct SelfTestCase {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Fast internal consistency checks: head equivalence and commutation between
// the two pipelines, counter-vs-model agreement, cost ratios, metric
// identities. Runs in a few seconds; intended for deployment sanity checks.
std::vector<SelfTestCase> run_selftest(std::uint64_t seed = 0);

}  // namespace tokenmask
