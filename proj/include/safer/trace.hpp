#pragma once

#include <nlohmann/json.hpp>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "safer/agents.hpp"
#include "safer/plan.hpp"
#include "safer/world.hpp"

// Execution traces, persisted as JSONL: a header line, one line per plan
// version, one per event, one per agent call, and a closing status line.
// See docs/trace_schema.md.

namespace safer::trace {

inline constexpr int kTraceSchemaVersion = 1;

enum class EventKind {
  StepDispatched,
  FeasibilityVerdict,
  SubgoalReached,
  SafetyInfeasible,
  FailureFeedback,
  SuccessFeedback,
  Replan,
  WorldSample,
};
std::string to_string(EventKind k);
EventKind event_kind_from_string(const std::string& s);

struct Event {
  EventKind kind = EventKind::WorldSample;
  double t = 0.0;
  int step = -1;  // global dispatch index, -1 when not tied to a step
  nlohmann::json data = nlohmann::json::object();

  bool operator==(const Event&) const = default;
};

enum class Status { Completed, Failed, Aborted };
std::string to_string(Status s);
Status status_from_string(const std::string& s);

struct CritiqueEntry {
  int round = 0;
  std::string text;
  bool operator==(const CritiqueEntry&) const = default;
};

/// One planning session's outcome: the plan that was executed from
/// `first_step` on, with the constraints in force.
struct PlanVersion {
  int first_step = 0;
  int rounds = 0;
  bool approved = false;
  std::string plan_text;  // canonical
  std::vector<plan::ConstraintSpec> constraints;
  std::vector<CritiqueEntry> critiques;
  std::vector<std::string> notes;  // constraint lines dropped, ...
};

struct CallEntry {
  std::string agent;
  int ordinal = 0;
  double t = 0.0;  // sim time of the call
  agents::Accounting accounting;
};

struct Trace {
  std::string task_id;
  std::string task;
  nlohmann::json scene;  // initial world
  std::vector<std::string> prompt_versions;
  std::vector<PlanVersion> plans;
  std::vector<Event> events;
  std::vector<CallEntry> calls;
  std::optional<Status> status;
  std::string reason;
  int steps_executed = 0;

  agents::Accounting totals() const;
  /// Instructions completed under superseded plans followed by the whole last
  /// plan, re-indexed from 0.
  plan::TaskPlan effective_plan() const;
  /// Union of every plan version's constraints, without duplicates.
  std::vector<plan::ConstraintSpec> all_constraints() const;
  world::WorldState initial_world() const;
};

/// Throws SchemaError when events are out of time order, the status is
/// missing or a required field is absent.
void validate(const Trace& trace);

std::string to_jsonl(const Trace& trace);
Trace from_jsonl(std::istream& in);
Trace load(const std::string& path);
void save(const Trace& trace, const std::string& path);

nlohmann::json to_json(const agents::Accounting& a);
nlohmann::json to_json(const plan::Instruction& in);
nlohmann::json to_json(const plan::ConstraintSpec& spec);

/// Compact robot/human/object snapshot stored in WorldSample events.
nlohmann::json snapshot(const world::WorldState& world);

}  // namespace safer::trace
