#pragma once

#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "safer/agents.hpp"
#include "safer/cbf.hpp"
#include "safer/control.hpp"
#include "safer/error.hpp"
#include "safer/goals.hpp"
#include "safer/plan.hpp"
#include "safer/trace.hpp"
#include "safer/world.hpp"

namespace safer::orchestrator {

inline constexpr const char* kApprovalToken = "NO_SAFETY_CONCERNS";

struct Agents {
  agents::AgentBackend* task_planner = nullptr;
  agents::AgentBackend* safety_planner = nullptr;
  agents::AgentBackend* execution = nullptr;

  static Agents all(agents::AgentBackend& backend) { return {&backend, &backend, &backend}; }
};

struct OrchestratorConfig {
  int max_rounds = 3;
  int max_replans = 2;
  bool safety_planner = true;  // false skips the critique entirely
  double dt = 0.01;
  double subgoal_timeout = 30.0;  // sim seconds
  double sample_period = 0.1;     // WorldSample spacing
  double observation_radius = 3.0;
  bool intrinsic_limits = true;   // ee speed, height and reach barriers
  plan::PlanConfig plan;
  ToleranceConfig tolerance;
  cbf::GainSpec gains = cbf::GainSpec::defaults();
  control::Gains controller;
};

/// Thread-safe record of every agent call with its accounting.
class CallLog {
 public:
  agents::Completion call(agents::AgentBackend& backend, const std::string& agent,
                          const std::vector<agents::ChatTurn>& messages, double t);
  std::vector<trace::CallEntry> entries() const;
  int count(const std::string& agent_prefix = "") const;

 private:
  mutable std::mutex mutex_;
  std::vector<trace::CallEntry> entries_;
  std::map<std::string, int> ordinals_;
};

struct PlanningSession {
  std::string task;
  int rounds = 0;  // critique rounds completed, == critiques.size()
  bool approved = false;
  std::optional<plan::TaskPlan> plan;
  std::vector<plan::ConstraintSpec> constraints;
  std::vector<trace::CritiqueEntry> critiques;
  std::vector<std::string> plan_texts;  // raw planner replies, one per round
  std::vector<std::string> notes;
};

class PlanningFailed : public Error {
 public:
  explicit PlanningFailed(PlanningSession session);
  const PlanningSession& session() const { return session_; }

 private:
  PlanningSession session_;
};

struct Critique {
  bool approved = false;
  std::vector<std::string> hazards;
  std::vector<std::string> constraint_lines;
};

/// Reads a Safety-Planner reply. The bare token, or the token as the only
/// hazard line, approves the plan; constraint lines are collected either way.
Critique parse_critique(const std::string& text);

/// Task Planner proposes, Safety Planner critiques, repeated until approval
/// or max_rounds. Unparseable plans, or plans naming unknown entities, are
/// sent back to the planner as the round's critique. Returns the last usable
/// plan and the union of the constraints. `feedback` is execution feedback
/// for a replan. Throws PlanningFailed when no round gave a usable plan.
PlanningSession plan_loop(const std::string& task, const world::WorldState& world, const Agents& agents,
                          const OrchestratorConfig& config, CallLog& log, const std::string& feedback = "",
                          double t = 0.0);

struct Verdict {
  bool executable = false;
  std::string reason;
  bool parsed = true;
  std::string raw;
};

/// "YES" or "NO: <reason>"; anything else is NO with reason "unparseable verdict".
Verdict parse_verdict(const std::string& reply);

Verdict feasibility_check(const std::string& robot, const plan::Instruction& instruction, const world::WorldState& world,
                          agents::AgentBackend& backend, CallLog& log, double observation_radius = 3.0,
                          double t = 0.0);

struct FeedbackMsg {
  enum class Kind { Failure, Success };
  Kind kind = Kind::Success;
  int step = 0;
  std::string text;  // reason or progress
  double snapshot_t = 0.0;  // time of the WorldSample taken with it
};

/// Runs `session`'s plan in `world`. Never throws for task-level failures:
/// they end the trace as Failed; backend errors end it as Aborted.
trace::Trace execute(const std::string& task_id, const PlanningSession& session, world::WorldState world,
                     const Agents& agents, const OrchestratorConfig& config, CallLog& log);

/// plan_loop then execute. A planning failure gives a Failed trace with no steps.
trace::Trace run_task(const std::string& task_id, const std::string& task, const world::WorldState& world,
                      const Agents& agents, const OrchestratorConfig& config);

}  // namespace safer::orchestrator
