#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "safer/agents.hpp"
#include "safer/plan.hpp"
#include "safer/trace.hpp"
#include "safer/world.hpp"

// Rule-based and model-based judges over a finished trace. The rule judge is
// the ground truth the model judge is compared against.

namespace safer::judge {

inline constexpr int kCriteria = 15;

struct RiskCriterion {
  int id = 0;
  std::string name;
  std::string description;
};

/// The fixed 15-entry catalog, ids 1..15 in order.
const std::vector<RiskCriterion>& catalog();
const RiskCriterion& criterion(int id);
/// "1. name: description" per line, as embedded in the judge prompt.
std::string catalog_text();

enum class Severity { Warning, Violation };
enum class JudgeKind { Rule, Model };
std::string to_string(Severity s);
std::string to_string(JudgeKind k);

struct Violation {
  int criterion = 0;
  std::optional<int> step;  // plan index for plan checks, dispatched step for trace checks; empty = whole task
  std::string detail;
  Severity severity = Severity::Violation;

  bool operator==(const Violation&) const = default;
};

struct JudgeReport {
  std::string task_id;
  JudgeKind kind = JudgeKind::Rule;
  std::vector<Violation> violations;
  std::string raw;  // model reply (Model only)
  int retries = 0;  // format reminders sent (Model only)
  agents::Accounting accounting;

  int count() const { return static_cast<int>(violations.size()); }
  std::set<int> flagged() const;
};

nlohmann::json to_json(const JudgeReport& report);
JudgeReport report_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// World history: the WorldSample events of a trace, decoded.

struct RobotSample {
  world::Pose2 base;
  world::Vec3 base_vel = world::Vec3::Zero();
  world::Vec3 ee = world::Vec3::Zero();
  world::Vec3 ee_vel = world::Vec3::Zero();
  world::Gripper gripper = world::Gripper::Open;
  std::optional<std::string> held;
};

struct HumanSample {
  world::Vec2 p = world::Vec2::Zero();
  world::Vec2 v = world::Vec2::Zero();
};

struct Sample {
  double t = 0.0;
  std::map<std::string, RobotSample> robots;
  std::map<std::string, HumanSample> humans;
  std::map<std::string, world::Pose2> objects;  // planar pose
  std::map<std::string, double> object_z;
};

struct WorldHistory {
  std::vector<Sample> samples;
  static WorldHistory from_trace(const trace::Trace& trace);
};

struct JudgeConfig {
  plan::PlanConfig plan;       // access radii, robot separation, slow-down law
  double slack = 1e-2;         // m or m/s allowed past a limit
  double ee_clearance = 0.25;  // planar ee-to-ee distance for shared occupancy
  double reach_slack = 0.05;   // symbolic reach check
};

/// All 15 checkers. The trace must have a final status (validated first).
JudgeReport rule_judge(const plan::TaskPlan& plan, const trace::Trace& trace, const WorldHistory& history,
                       const JudgeConfig& config = {});
/// Uses the trace's effective plan and samples.
JudgeReport rule_judge(const trace::Trace& trace, const JudgeConfig& config = {});
/// One checker.
std::vector<Violation> check(int criterion, const plan::TaskPlan& plan, const trace::Trace& trace,
                             const WorldHistory& history, const JudgeConfig& config = {});

// ---------------------------------------------------------------------------
// Model judge

/// Capped text summary of a trace: status, events, minimum distances.
std::string summarize(const trace::Trace& trace, const JudgeConfig& config = {}, std::size_t max_events = 200);

/// Reads {"criteria": [{"id", "verdict", "evidence"}]} from a reply, allowing
/// surrounding prose. Throws UnparseableJudgment.
JudgeReport parse_judgment(const std::string& reply);

/// One judge call, plus one retry with a format reminder if the reply does
/// not parse. Throws UnparseableJudgment after the retry, BackendError on
/// transport failure.
JudgeReport llm_judge(const plan::TaskPlan& plan, const std::string& summary, agents::AgentBackend& backend,
                      const std::string& task_id = "task");

struct Confusion {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  int tn = 0;
  bool operator==(const Confusion&) const = default;
};

/// Per-criterion counts with the rule report as ground truth. A criterion is
/// flagged when the report has at least one violation for it. Throws Error
/// when the reports are for different tasks.
std::array<Confusion, kCriteria> agreement(const JudgeReport& rule, const JudgeReport& model);

}  // namespace safer::judge
