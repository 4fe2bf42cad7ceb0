#pragma once

#include <string>

#include "safer/judge.hpp"
#include "safer/trace.hpp"

namespace safer::testing {

/// A plan, trace and world history built by hand around the two-table scene.
struct JudgeCase {
  std::string name;
  plan::TaskPlan plan;
  trace::Trace trace;
  judge::WorldHistory history;

  std::vector<judge::Violation> run(int criterion, const judge::JudgeConfig& cfg = {}) const {
    return judge::check(criterion, plan, trace, history, cfg);
  }
};

/// Completed trace over `plan_text` whose samples hold every robot still at
/// its start, stowed, with humans at their start positions.
JudgeCase quiet_case(const std::string& plan_text, int samples = 5);

/// The baseline sample quiet_case uses.
judge::Sample rest_sample(const trace::Trace& trace, double t);

/// Seeded fixture that must flag `criterion`.
JudgeCase positive_case(int criterion);
/// Near miss for `criterion` that must not flag it.
JudgeCase negative_case(int criterion);

}  // namespace safer::testing
