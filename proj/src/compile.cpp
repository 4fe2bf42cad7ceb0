#include <cmath>

#include "safer/error.hpp"
#include "safer/plan.hpp"

namespace safer::plan {

using world::EntityKind;
using world::Vec2;
using world::Vec3;

namespace {

world::EntityHandle must_resolve(const world::WorldState& w, const std::string& ref) {
  auto h = world::resolve(w, ref);
  if (!h) throw ResolutionError("unknown entity '" + ref + "'");
  return *h;
}

bool is_region(const world::WorldState& w, const world::EntityHandle& h) {
  return h.kind == EntityKind::Static && w.static_entity(h.id).kind == world::StaticKind::Region;
}

Subgoal ee(const Vec3& p, std::string label) { return Subgoal{EeGoal{p}, std::nullopt, std::move(label)}; }

Subgoal gripper(world::Gripper g, std::optional<std::string> object, std::string label) {
  return Subgoal{GripperGoal{g, std::move(object)}, std::nullopt, std::move(label)};
}

std::vector<Subgoal> pick(const world::RobotState&, const world::WorldState& w, const std::string& ref,
                          const PlanConfig& cfg) {
  const auto h = must_resolve(w, ref);
  if (h.kind != EntityKind::Object) throw ResolutionError("'" + ref + "' is not an object");
  const auto& obj = w.object(h.id);
  if (!obj.graspable) throw SchemaError("object '" + obj.id + "' is not graspable");
  const Vec3 grasp = obj.grasp_point();
  const Vec3 approach = obj.grasp ? obj.grasp->approach : Vec3(0.0, 0.0, -1.0);
  return {ee(grasp - cfg.align_height * approach, "align"), ee(grasp, "reach"),
          gripper(world::Gripper::Closed, obj.id, "close"),
          ee(grasp + Vec3(0.0, 0.0, cfg.lift_height), "lift")};
}

std::vector<Subgoal> place(const world::RobotState&, const world::WorldState& w, const std::string& object_ref,
                           const std::string& dest_ref, const PlanConfig& cfg) {
  const auto obj = must_resolve(w, object_ref);
  if (obj.kind != EntityKind::Object) throw ResolutionError("'" + object_ref + "' is not an object");
  const auto dest = must_resolve(w, dest_ref);
  const Vec2 xy = world::entity_position(w, dest);
  // The grasp point sits above the object reference by the grasp offset.
  const auto& o = w.object(obj.id);
  const double offset = o.grasp ? o.grasp->offset.z() : 0.0;
  const Vec3 at(xy.x(), xy.y(), world::entity_top(w, dest) + cfg.place_height + offset);
  return {ee(at + Vec3(0.0, 0.0, cfg.align_height), "above"), ee(at, "place"),
          gripper(world::Gripper::Open, std::nullopt, "open"), ee(at + Vec3(0.0, 0.0, cfg.lift_height), "retreat")};
}

}  // namespace

std::vector<Subgoal> expand(const Instruction& in, const world::WorldState& w, const PlanConfig& cfg) {
  const auto& robot = w.robot(in.robot);
  switch (in.verb) {
    case Verb::Move: {
      const auto target = must_resolve(w, in.target);
      const Vec2 tp = world::entity_position(w, target);
      if (!robot.mobile) {
        return {ee(Vec3(tp.x(), tp.y(), robot.ee_home.z()), "move")};
      }
      if (is_region(w, target)) {
        return {Subgoal{BaseGoal{world::Pose2(tp.x(), tp.y(), robot.base.theta)}, std::nullopt, "move"}};
      }
      Vec2 dir = tp - robot.base.position();
      if (dir.norm() < 1e-9) dir = Vec2(std::cos(robot.base.theta), std::sin(robot.base.theta));
      dir.normalize();
      const Vec2 goal = tp - cfg.standoff * dir;
      return {Subgoal{BaseGoal{world::Pose2(goal.x(), goal.y(), std::atan2(dir.y(), dir.x()))}, std::nullopt,
                      "move"}};
    }
    case Verb::Pick:
      return pick(robot, w, in.target, cfg);
    case Verb::Place:
      return place(robot, w, in.target, in.destination, cfg);
    case Verb::MoveObject: {
      const auto obj = must_resolve(w, in.target);
      std::vector<Subgoal> out;
      if (robot.held != obj.id) out = pick(robot, w, in.target, cfg);
      for (auto& g : place(robot, w, in.target, in.destination, cfg)) out.push_back(std::move(g));
      return out;
    }
    case Verb::Release: {
      const auto obj = must_resolve(w, in.target);
      if (obj.kind != EntityKind::Object) throw ResolutionError("'" + in.target + "' is not an object");
      return {gripper(world::Gripper::Open, std::nullopt, "open"),
              ee(robot.ee_pos + Vec3(0.0, 0.0, cfg.lift_height), "retreat")};
    }
    case Verb::Wait:
    case Verb::Check: {
      // Both ends of the condition must exist.
      must_resolve(w, in.condition->subject);
      must_resolve(w, in.condition->target);
      return {Subgoal{WaitFor{*in.condition, in.verb == Verb::Wait}, std::nullopt,
                      in.verb == Verb::Wait ? "wait" : "check"}};
    }
  }
  return {};
}

std::optional<std::vector<std::string>> match_humans(const world::WorldState& w, std::string_view target) {
  const std::string t = world::normalize_name(target);
  std::optional<world::Access> access;
  bool group = false;
  for (const char* g : {"users", "user", "humans", "human", "people", "persons", "person", "personnel",
                        "everyone", "all humans", "all users", "all people"}) {
    if (t == g) group = true;
  }
  for (const char* g : {"technical personnel", "technical staff", "technicians", "technical users",
                        "technical people"}) {
    if (t == g) {
      group = true;
      access = world::Access::Technical;
    }
  }
  for (const char* g : {"non technical personnel", "nontechnical personnel", "non technical staff",
                        "non technical users", "non technical people"}) {
    if (t == g) {
      group = true;
      access = world::Access::NonTechnical;
    }
  }
  std::vector<std::string> ids;
  if (group) {
    for (const auto& h : w.humans) {
      if (!access || h.access == *access) ids.push_back(h.id);
    }
    return ids;
  }
  const auto h = world::resolve(w, target);
  if (h && h->kind == EntityKind::Human) return std::vector<std::string>{h->id};
  return std::nullopt;
}

std::vector<cbf::BarrierFunction> compile_constraint(const ConstraintSpec& spec, const world::WorldState& w,
                                                     const PlanConfig& cfg) {
  w.robot(spec.robot);
  std::vector<cbf::BarrierFunction> out;
  switch (spec.kind) {
    case ConstraintKind::NoCollide: {
      const auto subject = cbf::Subject::of(w, spec.robot, spec.subject);
      const auto target = must_resolve(w, spec.target);
      if (target.kind == EntityKind::Robot && target.id == spec.robot) {
        throw ResolutionError("robot '" + spec.robot + "' cannot avoid itself");
      }
      auto bf = cbf::keep_out(subject, cbf::ShapeSource::enclosing(w, target), cfg.margin);
      bf.name = "no_collide:" + target.id;
      out.push_back(std::move(bf));
      break;
    }
    case ConstraintKind::KeepAway: {
      const auto subject = cbf::Subject::of(w, spec.robot, spec.subject);
      if (auto humans = match_humans(w, spec.target)) {
        for (const auto& id : *humans) {
          const double r = spec.radius.value_or(w.human(id).access == world::Access::Technical
                                                    ? cfg.radius_technical
                                                    : cfg.radius_non_technical);
          out.push_back(cbf::keep_away_human(subject, id, r));
        }
        break;
      }
      const auto target = must_resolve(w, spec.target);
      if (target.kind == EntityKind::Robot) {
        if (target.id == spec.robot) throw ResolutionError("robot '" + spec.robot + "' cannot avoid itself");
        out.push_back(cbf::separation(subject, target.id, spec.radius.value_or(cfg.separation)));
      } else {
        auto bf = cbf::keep_out(subject, cbf::ShapeSource::enclosing(w, target), spec.radius.value_or(cfg.margin));
        bf.name = "keep_away:" + target.id;
        out.push_back(std::move(bf));
      }
      break;
    }
    case ConstraintKind::SlowNear: {
      // Speed caps act on the arm whatever subject the line names.
      const auto subject = cbf::Subject::of(w, spec.robot, world::Slice::Ee);
      auto humans = match_humans(w, spec.target);
      if (!humans) {
        must_resolve(w, spec.target);
        throw ResolutionError("'" + spec.target + "' is not a person");
      }
      for (const auto& id : *humans) {
        out.push_back(cbf::speed_cap_near(subject, id, spec.v_max.value_or(cfg.v_max), spec.d_slow.value_or(cfg.d_slow)));
      }
      break;
    }
    case ConstraintKind::WorkspaceLimit: {
      const auto subject = cbf::Subject::of(w, spec.robot, spec.subject);
      const auto target = must_resolve(w, spec.target);
      if (target.kind != EntityKind::Static) throw ResolutionError("'" + spec.target + "' is not a region");
      out = cbf::workspace_polygon(subject, w.static_entity(target.id).polygon, target.id);
      break;
    }
  }
  return out;
}

std::vector<std::string> reference_issues(const TaskPlan& plan, const world::WorldState& w) {
  std::vector<std::string> issues;
  auto check = [&](const Instruction& in, const std::string& ref) {
    if (!ref.empty() && !world::resolve(w, ref)) {
      issues.push_back("step " + std::to_string(in.index + 1) + ": unknown entity '" + ref + "'");
    }
  };
  for (const auto& in : plan.instructions) {
    const auto* robot = w.find_robot(in.robot);
    if (!robot) {
      issues.push_back("step " + std::to_string(in.index + 1) + ": unknown robot '" + robot_label(in.robot) + "'");
      continue;
    }
    if (!robot->can(capability(in.verb))) {
      issues.push_back("step " + std::to_string(in.index + 1) + ": " + robot_label(in.robot) + " lacks capability '" +
                       capability(in.verb) + "'");
    }
    check(in, in.target);
    check(in, in.destination);
    if (in.condition) {
      check(in, in.condition->subject);
      check(in, in.condition->target);
    }
  }
  return issues;
}

}  // namespace safer::plan
