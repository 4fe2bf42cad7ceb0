#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "safer/barriers.hpp"
#include "safer/goals.hpp"
#include "safer/world.hpp"

// Closed grammar for Task-Planner and Safety-Planner output. See
// docs/grammar.md for the full production list.

namespace safer::plan {

enum class Verb { Move, Pick, Place, Release, MoveObject, Wait, Check };

std::string to_string(Verb v);
/// Capability name a robot needs for the verb ("move", "pick", ...).
std::string capability(Verb v);

struct Instruction {
  std::string robot;        // robot id, "robot_<N>"
  Verb verb = Verb::Move;
  std::string target;       // location (Move) or object, as written
  std::string destination;  // Place / MoveObject
  std::string preposition;  // Place: "in" or "on"
  std::optional<Condition> condition;  // Wait / Check
  std::string raw;          // original line, verbatim
  int index = 0;

  /// Semantic equality: every field except `raw`.
  bool operator==(const Instruction& o) const;
};

struct TaskPlan {
  std::string task_id;
  std::vector<Instruction> instructions;
  /// Condition that must hold before the instruction at the key runs, taken
  /// from the Wait/Check instruction just before it.
  std::map<int, Condition> preconditions;

  bool operator==(const TaskPlan& o) const { return instructions == o.instructions; }
};

/// "Robot 3" for "robot_3".
std::string robot_label(std::string_view robot_id);

/// One instruction per non-blank line. Keywords match case-insensitively;
/// entity text is kept as written. Throws ParseError.
TaskPlan parse_plan(std::string_view text, std::string task_id = "task");
Instruction parse_instruction(std::string_view line, std::size_t line_number = 1, int index = 0);
Condition parse_condition(std::string_view text, std::size_t line_number = 1);

/// Canonical single-line form.
std::string render(const Instruction& instruction);
/// Canonical form, one instruction per line, trailing newline.
std::string render(const TaskPlan& plan);

// ---------------------------------------------------------------------------
// Safety directives

enum class ConstraintKind { NoCollide, KeepAway, SlowNear, WorkspaceLimit };
std::string to_string(ConstraintKind k);

/// Step range an instruction-scoped constraint applies to, 0-based inclusive.
struct Scope {
  std::optional<int> first;
  std::optional<int> last;

  bool global() const { return !first.has_value(); }
  bool covers(int step) const { return global() || (step >= *first && step <= *last); }
  bool operator==(const Scope&) const = default;
};

struct ConstraintSpec {
  std::string robot;  // robot id
  world::Slice subject = world::Slice::Base;
  ConstraintKind kind = ConstraintKind::NoCollide;
  std::string target;  // entity or group reference, as written
  std::optional<double> radius;  // KeepAway
  std::optional<double> v_max;   // SlowNear
  std::optional<double> d_slow;  // SlowNear
  Scope scope;
  std::string raw;

  bool operator==(const ConstraintSpec& o) const;
};

std::vector<ConstraintSpec> parse_constraints(std::string_view text);
ConstraintSpec parse_constraint(std::string_view line, std::size_t line_number = 1);
std::string render(const ConstraintSpec& spec);
std::string render(const std::vector<ConstraintSpec>& specs);

// ---------------------------------------------------------------------------
// Compilation against a scene

struct PlanConfig {
  double standoff = 0.6;        // m, Move distance from the target
  double align_height = 0.10;   // m above the grasp point
  double lift_height = 0.10;
  double place_height = 0.10;   // m above the destination top
  double margin = 0.05;         // NoCollide inflation
  double radius_non_technical = 1.0;
  double radius_technical = 0.3;
  double v_max = 0.5;           // SlowNear default cap
  double d_slow = 1.5;
  double separation = 0.3;      // KeepAway from another robot
};

/// Subgoals for one instruction from the current world.
///   Move       -> [BaseGoal] for mobile robots, [EeGoal] for fixed ones
///   Pick       -> [align, reach, close, lift]
///   Place      -> [above, place, open, retreat]
///   MoveObject -> Pick + Place (Place only when already holding)
///   Release    -> [open, retreat]
///   Wait/Check -> [WaitFor]
/// Throws ResolutionError for unknown entities and SchemaError for picking a
/// non-graspable object.
std::vector<Subgoal> expand(const Instruction& instruction, const world::WorldState& world,
                            const PlanConfig& config = {});

/// Barriers realising the directive in `world`. Throws ResolutionError when
/// the target is missing.
std::vector<cbf::BarrierFunction> compile_constraint(const ConstraintSpec& spec, const world::WorldState& world,
                                                     const PlanConfig& config = {});

/// Humans matched by a KeepAway/SlowNear target ("users", "technical
/// personnel", a name, ...). Empty optional when the target is not a human
/// group or person.
std::optional<std::vector<std::string>> match_humans(const world::WorldState& world, std::string_view target);

/// Entity references of the plan that do not resolve, and robots lacking a
/// capability, as human-readable issues (empty when clean).
std::vector<std::string> reference_issues(const TaskPlan& plan, const world::WorldState& world);

}  // namespace safer::plan
