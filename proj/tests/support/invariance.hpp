#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace safer::testing {

struct InvarianceResult {
  std::string kind;
  int trials = 0;
  int failures = 0;      // trials whose min h fell below the floor
  double min_h = 0.0;    // over every trial and tick
};

/// Barrier setups exercised by the invariance property.
const std::vector<std::string>& invariance_kinds();

/// Runs `trials` seeded closed-loop simulations of `duration` seconds at
/// dt = 0.01 with an adversarial nominal controller.
InvarianceResult run_invariance(const std::string& kind, int trials, std::uint64_t seed,
                                double duration = 10.0, double floor = -1e-3);

}  // namespace safer::testing
