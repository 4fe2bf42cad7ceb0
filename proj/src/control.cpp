#include "safer/control.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "safer/error.hpp"

namespace safer::control {

using world::Vec2;
using world::Vec3;
using Eigen::VectorXd;

world::Vec3 base_twist_to(const world::RobotState& r, const world::Pose2& goal, const Gains& g) {
  Vec2 v = g.base_kp * (goal.position() - r.base.position());
  const double lim = r.limits.base_linear;
  if (v.norm() > lim) v *= lim / v.norm();
  const Vec2 body = Eigen::Rotation2Dd(-r.base.theta) * v;
  const double w = g.base_k_theta * world::normalize_angle(goal.theta - r.base.theta);
  return {std::clamp(body.x(), -lim, lim), std::clamp(body.y(), -lim, lim),
          std::clamp(w, -r.limits.base_angular, r.limits.base_angular)};
}

world::Vec3 ee_accel_to(const world::RobotState& r, const world::Vec3& goal, const Gains& g) {
  const Vec3 a = g.ee_kp * (goal - r.ee_pos) - g.ee_kd * r.ee_vel;
  const double lim = r.limits.ee_accel;
  return a.cwiseMax(Vec3::Constant(-lim)).cwiseMin(Vec3::Constant(lim));
}

std::vector<cbf::BarrierFunction> intrinsic_barriers(const world::WorldState& w, const std::string& robot) {
  const auto& r = w.robot(robot);
  const auto subject = cbf::Subject::of(w, robot, world::Slice::Ee);
  const double s = r.limits.ee_speed;
  auto out = cbf::velocity_box(subject, {{0, -s, s}, {1, -s, s}, {2, -s, s}});
  for (auto& bf : cbf::position_box(subject, {{2, r.limits.ee_z_min, r.limits.ee_z_max}})) out.push_back(std::move(bf));
  out.push_back(cbf::reach(subject, r.reach));
  return out;
}

Filtered filter(const world::WorldState& w, const std::string& robot, const VectorXd& nominal,
                std::span<const cbf::BarrierFunction> base_barriers, std::span<const cbf::BarrierFunction> ee_barriers,
                const cbf::GainSpec& gains) {
  const auto& r = w.robot(robot);
  const std::vector<cbf::GainSpec> g = {gains};
  Filtered out;
  out.u = nominal;

  const VectorXd base_hi = (VectorXd(3) << r.limits.base_linear, r.limits.base_linear, r.limits.base_angular).finished();
  Vec3 twist = Vec3::Zero();
  if (r.mobile) {
    const VectorXd nom = nominal.head<3>().cwiseMax(-base_hi).cwiseMin(base_hi);
    if (base_barriers.empty()) {
      twist = nom;
    } else {
      const auto sc = cbf::safe_control(nom, base_barriers, world::DynamicsModel::base(),
                                        world::slice_state(r, world::Slice::Base), g, world::Slice::Base, -base_hi,
                                        base_hi, w);
      twist = sc.u;
      out.base_infeasible = sc.infeasible;
    }
  }
  out.u.head<3>() = twist;

  const Vec2 carrier = Eigen::Rotation2Dd(r.base.theta) * twist.head<2>();
  world::WorldState env = w;
  env.robot(robot).base_vel = Vec3(carrier.x(), carrier.y(), twist.z());
  const VectorXd ee_hi = VectorXd::Constant(3, r.limits.ee_accel);
  const VectorXd nom = nominal.tail<3>().cwiseMax(-ee_hi).cwiseMin(ee_hi);
  if (ee_barriers.empty()) {
    out.u.tail<3>() = nom;
  } else {
    const auto sc = cbf::safe_control(nom, ee_barriers, world::DynamicsModel::end_effector(carrier),
                                      world::slice_state(r, world::Slice::Ee), g, world::Slice::Ee, -ee_hi, ee_hi, env);
    out.u.tail<3>() = sc.u;
    out.ee_infeasible = sc.infeasible;
  }
  return out;
}

Policy policy_from_string(const std::string& s) {
  if (s == "goal") return Policy::Goal;
  if (s == "adversarial") return Policy::Adversarial;
  throw SchemaError("unknown policy '" + s + "' (goal or adversarial)");
}

namespace {

// Full actuation along -grad of the lowest barrier in the slice.
VectorXd push_down(const world::WorldState& w, const world::RobotState& r, world::Slice slice,
                   std::span<const cbf::BarrierFunction> barriers, const VectorXd& hi) {
  const cbf::BarrierFunction* worst = nullptr;
  double lowest = 0.0;
  for (const auto& bf : barriers) {
    const double h = bf.eval(w);
    if (!worst || h < lowest) {
      worst = &bf;
      lowest = h;
    }
  }
  VectorXd u = VectorXd::Zero(hi.size());
  if (!worst) return u;
  const auto dyn = world::slice_dynamics(r, slice);
  const VectorXd x = world::slice_state(r, slice);
  const auto lie = worst->lie ? worst->lie(x, w, dyn) : cbf::finite_difference_lie(*worst, dyn, x, w);
  const VectorXd g = worst->relative_degree == 2 ? lie.lglf : lie.lg;
  if (g.size() != hi.size() || g.norm() < 1e-12) return u;
  for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = g(i) > 0 ? -hi(i) : g(i) < 0 ? hi(i) : 0.0;
  return u;
}

}  // namespace

SimResult simulate(world::WorldState w, const SimSpec& spec, const std::vector<cbf::BarrierFunction>& barriers,
                   const Gains& gains, const cbf::GainSpec& cbf_gains) {
  if (!(spec.dt > 0.0) || !(spec.duration > 0.0)) throw SchemaError("dt and duration must be positive");
  const auto& start = w.robot(spec.robot);
  std::vector<cbf::BarrierFunction> base_b;
  std::vector<cbf::BarrierFunction> ee_b;
  for (const auto& bf : barriers) {
    if (bf.subject.robot != spec.robot) throw SchemaError("barrier '" + bf.name + "' is for another robot");
    (bf.subject.slice == world::Slice::Base ? base_b : ee_b).push_back(bf);
  }
  if (spec.intrinsic) {
    for (auto& bf : intrinsic_barriers(w, spec.robot)) ee_b.push_back(std::move(bf));
  }
  SimResult out;
  for (const auto* set : {&base_b, &ee_b}) {
    for (const auto& bf : *set) out.names.push_back(bf.name);
  }
  const world::Pose2 hold = start.base;
  const Vec3 ee_hold = start.ee_pos;
  out.min_h = std::numeric_limits<double>::infinity();
  const long ticks = std::lround(spec.duration / spec.dt);
  for (long k = 0; k <= ticks; ++k) {
    const auto& r = w.robot(spec.robot);
    SimRow row;
    row.t = w.time;
    for (const auto* set : {&base_b, &ee_b}) {
      for (const auto& bf : *set) {
        row.h.push_back(bf.eval(w));
        out.min_h = std::min(out.min_h, row.h.back());
      }
    }
    VectorXd nominal(world::kRobotControlDim);
    if (spec.policy == Policy::Adversarial) {
      const VectorXd base_hi = (VectorXd(3) << r.limits.base_linear, r.limits.base_linear, r.limits.base_angular).finished();
      const VectorXd ee_hi = VectorXd::Constant(3, r.limits.ee_accel);
      nominal << push_down(w, r, world::Slice::Base, base_b, base_hi), push_down(w, r, world::Slice::Ee, ee_b, ee_hi);
    } else {
      const Vec3 twist = base_twist_to(r, spec.base_goal.value_or(hold), gains);
      const Vec3 goal = spec.ee_goal ? *spec.ee_goal : spec.base_goal ? r.stowed_ee(r.base) : ee_hold;
      nominal << twist, ee_accel_to(r, goal, gains);
    }
    const auto f = filter(w, spec.robot, nominal, base_b, ee_b, cbf_gains);
    if (f.base_infeasible || f.ee_infeasible) ++out.infeasible_ticks;
    row.u_nom = nominal;
    row.u = f.u;
    out.rows.push_back(std::move(row));
    if (k == ticks) break;
    world::Controls controls;
    for (const auto& other : w.robots) {
      controls[other.id] = other.id == spec.robot ? f.u : VectorXd::Zero(world::kRobotControlDim);
    }
    w = world::step(w, controls, spec.dt);
  }
  return out;
}

std::string to_csv(const SimResult& result) {
  std::ostringstream out;
  out << "t";
  for (const auto& n : result.names) out << ",h:" << n;
  for (int i = 0; i < world::kRobotControlDim; ++i) out << ",unom_" << i;
  for (int i = 0; i < world::kRobotControlDim; ++i) out << ",u_" << i;
  out << "\n";
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.9g", v);
    out << buf;
  };
  for (const auto& row : result.rows) {
    std::snprintf(buf, sizeof buf, "%.4f", row.t);
    out << buf;
    for (double h : row.h) put(h);
    for (Eigen::Index i = 0; i < row.u_nom.size(); ++i) put(row.u_nom(i));
    for (Eigen::Index i = 0; i < row.u.size(); ++i) put(row.u(i));
    out << "\n";
  }
  return out.str();
}

}  // namespace safer::control
