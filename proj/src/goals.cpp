#include "safer/goals.hpp"

#include <cmath>
#include <sstream>

#include "safer/error.hpp"

namespace safer {

using world::EntityKind;

std::string Condition::render() const {
  switch (kind) {
    case Kind::RobotAt:
      return subject + " at " + target;
    case Kind::Holding:
      return subject + " holding " + target;
    case Kind::ObjectAt:
      return subject + " " + preposition + " " + target;
  }
  return {};
}

bool Condition::operator==(const Condition& o) const {
  return kind == o.kind && world::normalize_name(subject) == world::normalize_name(o.subject) &&
         world::normalize_name(target) == world::normalize_name(o.target) &&
         (kind != Kind::ObjectAt || preposition == o.preposition);
}

std::string describe(const Subgoal& goal) {
  std::ostringstream out;
  std::visit(
      [&](const auto& g) {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, BaseGoal>) {
          out << "base -> (" << g.pose.x << ", " << g.pose.y << ", " << g.pose.theta << ")";
        } else if constexpr (std::is_same_v<T, EeGoal>) {
          out << "ee -> (" << g.point.x() << ", " << g.point.y() << ", " << g.point.z() << ")";
        } else if constexpr (std::is_same_v<T, GripperGoal>) {
          out << "gripper " << world::to_string(g.state);
          if (g.object) out << " on " << *g.object;
        } else {
          out << (g.blocking ? "wait for " : "check ") << g.condition.render();
        }
      },
      goal.kind);
  if (!goal.label.empty()) return goal.label + ": " + out.str();
  return out.str();
}

namespace {

world::EntityHandle must_resolve(const world::WorldState& w, const std::string& ref) {
  auto h = world::resolve(w, ref);
  if (!h) throw ResolutionError("unknown entity '" + ref + "'");
  return *h;
}

}  // namespace

bool evaluate(const Condition& c, const world::WorldState& w, double standoff) {
  const auto subject = must_resolve(w, c.subject);
  const auto target = must_resolve(w, c.target);
  switch (c.kind) {
    case Condition::Kind::RobotAt: {
      if (subject.kind != EntityKind::Robot) {
        throw ResolutionError("'" + c.subject + "' is not a robot");
      }
      const auto& robot = w.robot(subject.id);
      // A fixed robot is "at" a location when its arm is.
      const world::Vec2 where = robot.mobile ? robot.base.position() : world::Vec2(robot.ee_pos.head<2>());
      if (target.kind == EntityKind::Static &&
          w.static_entity(target.id).kind == world::StaticKind::Region) {
        return geom::contains(w.static_entity(target.id).polygon, where);
      }
      const double d = (where - world::entity_position(w, target)).norm();
      return d <= standoff + kAtLocationSlack;
    }
    case Condition::Kind::Holding: {
      if (subject.kind != EntityKind::Robot) {
        throw ResolutionError("'" + c.subject + "' is not a robot");
      }
      return w.robot(subject.id).held == target.id;
    }
    case Condition::Kind::ObjectAt: {
      if (subject.kind != EntityKind::Object) {
        throw ResolutionError("'" + c.subject + "' is not an object");
      }
      const auto& obj = w.object(subject.id);
      const auto shape = world::entity_shape(w, target);
      return geom::point_shape(obj.pose.position(), shape).distance <= 0.0;
    }
  }
  return false;
}

bool subgoal_achieved(const world::WorldState& w, std::string_view robot_id, const Subgoal& goal,
                      const ToleranceConfig& default_tol, double standoff) {
  const auto& robot = w.robot(robot_id);
  const ToleranceConfig tol = goal.tolerance.value_or(default_tol);
  return std::visit(
      [&](const auto& g) -> bool {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, BaseGoal>) {
          const double pos_err = (robot.base.position() - g.pose.position()).norm();
          const double ang_err = std::abs(world::normalize_angle(robot.base.theta - g.pose.theta));
          const double speed = world::base_linear_velocity(robot).norm();
          return pos_err <= tol.pos && ang_err <= tol.ang && speed <= tol.vel;
        } else if constexpr (std::is_same_v<T, EeGoal>) {
          return (robot.ee_pos - g.point).norm() <= tol.pos && robot.ee_vel.norm() <= tol.vel;
        } else if constexpr (std::is_same_v<T, GripperGoal>) {
          if (robot.gripper != g.state) return false;
          if (g.state == world::Gripper::Closed && g.object) {
            if (!w.find_object(*g.object)) {
              throw ResolutionError("unknown object '" + *g.object + "'");
            }
            return robot.held == *g.object;
          }
          if (g.state == world::Gripper::Open) return !robot.held.has_value();
          return true;
        } else {
          return evaluate(g.condition, w, standoff);
        }
      },
      goal.kind);
}

}  // namespace safer
