#pragma once

#include <optional>
#include <string>
#include <variant>

#include "safer/world.hpp"

namespace safer {

/// Boolean world query used by Wait/Check instructions.
///   RobotAt  -- subject robot is at the target location (base, or ee for fixed robots)
///   Holding  -- subject robot holds the target object
///   ObjectAt -- subject object lies on/in the target entity
struct Condition {
  enum class Kind { RobotAt, Holding, ObjectAt };
  Kind kind = Kind::RobotAt;
  std::string subject;  // entity reference text
  std::string target;   // entity reference text
  std::string preposition = "at";  // "at", "holding", "on" or "in"

  std::string render() const;
  bool operator==(const Condition& o) const;
};

struct ToleranceConfig {
  double pos = 0.02;  // m
  double ang = 0.05;  // rad
  double vel = 0.05;  // m/s
};

struct BaseGoal {
  world::Pose2 pose;
};

struct EeGoal {
  world::Vec3 point = world::Vec3::Zero();
};

struct GripperGoal {
  world::Gripper state = world::Gripper::Open;
  std::optional<std::string> object;  // object id
};

/// blocking: poll until true or timeout (Wait); otherwise evaluate once (Check).
struct WaitFor {
  Condition condition;
  bool blocking = true;
};

struct Subgoal {
  std::variant<BaseGoal, EeGoal, GripperGoal, WaitFor> kind;
  std::optional<ToleranceConfig> tolerance;
  std::string label;  // "align", "reach", "close", "lift", ...
};

std::string describe(const Subgoal& goal);

/// Distance below which a robot counts as "at" a non-region entity, on top of
/// the standoff used by Move.
inline constexpr double kAtLocationSlack = 0.15;

/// Evaluates a condition. Throws ResolutionError on dangling references.
bool evaluate(const Condition& condition, const world::WorldState& world, double standoff = 0.6);

/// Pose goals: position error <= tol.pos, heading error <= tol.ang, speed <=
/// tol.vel. Gripper goals: gripper state and, for closing on an object, the
/// held id. WaitFor goals delegate to evaluate().
bool subgoal_achieved(const world::WorldState& world, std::string_view robot_id, const Subgoal& goal,
                      const ToleranceConfig& tol = {}, double standoff = 0.6);

}  // namespace safer
