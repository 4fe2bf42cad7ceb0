#include "support/invariance.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>

#include "safer/barriers.hpp"
#include "safer/cbf.hpp"

namespace safer::testing {

using namespace safer::cbf;
using world::Pose2;
using world::Slice;
using world::Vec2;
using world::Vec3;
using world::WorldState;

namespace {

constexpr double kDt = 0.01;

struct Setup {
  WorldState world;
  Slice slice = Slice::Base;
  std::vector<BarrierFunction> barriers;
  std::function<Vec3(const WorldState&)> target;  // point the nominal drives at
  Vec3 base_twist = Vec3::Zero();                 // ee setups: fixed base command
  bool accelerate_only = false;                   // velocity setups: push along `push`
  Vec3 push = Vec3::Zero();
  bool speed_up = false;                          // push along the current velocity
};

world::RobotState make_robot(const std::string& id, const Pose2& pose) {
  world::RobotState r;
  r.id = id;
  r.base = pose;
  r.ee_pos = r.stowed_ee(pose);
  return r;
}

Vec2 unit(std::mt19937& rng) {
  std::uniform_real_distribution<double> a(-M_PI, M_PI);
  const double t = a(rng);
  return {std::cos(t), std::sin(t)};
}

geom::Polygon random_convex(std::mt19937& rng, const Vec2& c, double scale) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec2> pts;
  for (int i = 0; i < 8; ++i) pts.push_back(c + scale * Vec2(u(rng), u(rng)));
  return geom::convex_hull(pts);
}

Setup sample(const std::string& kind, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Setup s;
  s.world.robots.push_back(make_robot("r", Pose2(2.0 * u(rng), 2.0 * u(rng), M_PI * u(rng))));
  auto& r = s.world.robots.front();
  const bool ee = kind.find("_ee") != std::string::npos || kind == "velocity_box" || kind == "speed_cap" ||
                  kind == "reach";
  s.slice = ee ? Slice::Ee : Slice::Base;
  if (ee) {
    const Vec2 off = 0.8 * std::sqrt(u01(rng)) * unit(rng);
    r.ee_pos = Vec3(r.base.x + off.x(), r.base.y + off.y(), 0.5 + 0.8 * u01(rng));
    r.ee_vel = 0.3 * Vec3(u(rng), u(rng), u(rng));
  }
  const Subject subject = Subject::of(s.world, "r", s.slice);
  const Vec3 far = Vec3(10.0 * u(rng), 10.0 * u(rng), ee ? 2.0 * u(rng) + 0.9 : 0.0);
  s.target = [far](const WorldState&) { return far; };

  if (kind == "position_box_base" || kind == "position_box_ee") {
    std::vector<AxisBound> b = {{0, -2.5, 2.5}, {1, -2.5, 2.5}};
    if (ee) b.push_back({2, 0.2, 1.6});
    s.barriers = position_box(subject, b);
  } else if (kind == "velocity_box") {
    s.barriers = velocity_box(subject, {{0, -0.6, 0.6}, {1, -0.6, 0.6}, {2, -0.6, 0.6}});
    s.accelerate_only = true;
    s.push = Vec3(u(rng), u(rng), u(rng)).normalized();
  } else if (kind == "workspace_base" || kind == "workspace_ee") {
    s.barriers = workspace_polygon(subject, random_convex(rng, Vec2::Zero(), 3.0));
  } else if (kind == "keep_out_base" || kind == "keep_out_ee") {
    const geom::Polygon obstacle = random_convex(rng, Vec2(2.0 * u(rng), 2.0 * u(rng)), 0.6);
    s.barriers = {keep_out(subject, ShapeSource::fixed(obstacle, "obstacle"), 0.05)};
    const Vec2 c = geom::centroid(obstacle);
    s.target = [c](const WorldState& w) { return Vec3(c.x(), c.y(), w.robots.front().ee_pos.z()); };
  } else if (kind == "separation") {
    const Vec2 other = r.base.position() + (1.0 + 2.0 * u01(rng)) * unit(rng);
    const double heading = std::atan2(r.base.y - other.y(), r.base.x - other.x());
    s.world.robots.push_back(make_robot("o", Pose2(other.x(), other.y(), heading)));
    s.barriers = {separation(subject, "o", 0.3)};
    s.target = [](const WorldState& w) {
      const Vec2 p = w.robots.back().base.position();
      return Vec3(p.x(), p.y(), 0.0);
    };
  } else if (kind == "keep_away_base" || kind == "keep_away_ee") {
    const Vec2 subject_p = ee ? Vec2(r.ee_pos.head<2>()) : r.base.position();
    const Vec2 start = subject_p + (1.2 + 2.0 * u01(rng)) * unit(rng);
    const Vec2 dir = (subject_p - start).normalized();
    world::HumanState h;
    h.id = "h";
    h.access = world::Access::NonTechnical;
    s.world.humans.push_back(h);
    s.world.human_paths.push_back({"h", {{0.0, start}, {100.0, start + 30.0 * dir}}});
    s.world.humans.back().position = s.world.human_paths.back().position_at(0.0);
    s.world.humans.back().velocity = s.world.human_paths.back().velocity_at(0.0);
    s.barriers = {keep_away_human(subject, "h", 1.0)};
    s.target = [](const WorldState& w) {
      const Vec2 p = w.humans.front().position;
      return Vec3(p.x(), p.y(), w.robots.front().ee_pos.z());
    };
  } else if (kind == "speed_cap") {
    world::HumanState h;
    h.id = "t";
    h.access = world::Access::Technical;
    h.position = Vec2(r.ee_pos.head<2>()) + (0.3 + 2.5 * u01(rng)) * unit(rng);
    s.world.humans.push_back(h);
    s.barriers = {speed_cap_near(subject, "t", 0.5, 1.5)};
    // Full acceleration along the current velocity, started toward the person.
    s.speed_up = true;
    const Vec2 at = h.position - Vec2(r.ee_pos.head<2>());
    r.ee_vel = 0.3 * u01(rng) * Vec3(at.x(), at.y(), 0.0).normalized();
  } else if (kind == "reach") {
    s.barriers = {reach(subject, r.reach)};
    s.base_twist = Vec3(0.5 * u(rng), 0.5 * u(rng), u(rng));
    s.target = [far](const WorldState& w) {
      // Away from the base, beyond reach.
      const auto& rb = w.robots.front();
      Vec2 d = rb.ee_pos.head<2>() - rb.base.position();
      if (d.norm() < 1e-9) d = Vec2(1.0, 0.0);
      const Vec2 p = rb.base.position() + 5.0 * d.normalized();
      return Vec3(p.x(), p.y(), far.z());
    };
  } else {
    throw std::invalid_argument("unknown invariance kind '" + kind + "'");
  }
  return s;
}

// Valid start: h >= 0.05 and, for degree-2 barriers, inside the second-order
// safe set hdot + p h >= 0 with p the (repeated) closed-loop pole magnitude.
bool admissible(const Setup& s) {
  const auto& r = s.world.robots.front();
  const VectorXd x = world::slice_state(r, s.slice);
  const auto dyn = world::slice_dynamics(r, s.slice);
  for (const auto& bf : s.barriers) {
    const LieTerms lie = bf.lie(x, s.world, dyn);
    if (lie.h < 0.05) return false;
    if (bf.relative_degree == 2 && lie.lf + 2.0 * lie.h < 0.0) return false;
  }
  return true;
}

VectorXd clamp(const VectorXd& u, const VectorXd& lo, const VectorXd& hi) { return u.cwiseMax(lo).cwiseMin(hi); }

double simulate(Setup s, double duration) {
  const auto& limits = s.world.robots.front().limits;
  const VectorXd base_hi = (VectorXd(3) << limits.base_linear, limits.base_linear, limits.base_angular).finished();
  const VectorXd ee_hi = VectorXd::Constant(3, limits.ee_accel);
  const std::vector<GainSpec> gains = {GainSpec::defaults()};
  double min_h = INFINITY;
  const int ticks = static_cast<int>(std::lround(duration / kDt));
  for (int k = 0; k <= ticks; ++k) {
    for (const auto& bf : s.barriers) min_h = std::min(min_h, bf.eval(s.world));
    if (k == ticks) break;
    const auto& r = s.world.robots.front();
    const Vec3 goal = s.target(s.world);
    world::Controls controls;
    VectorXd u = VectorXd::Zero(world::kRobotControlDim);
    if (s.slice == Slice::Base) {
      Vec2 dir = goal.head<2>() - r.base.position();
      dir = dir.norm() > 1e-9 ? Vec2(dir.normalized()) : Vec2::Zero();
      const Vec2 body = Eigen::Rotation2Dd(-r.base.theta) * (limits.base_linear * dir);
      const VectorXd nominal = clamp((VectorXd(3) << body.x(), body.y(), 0.0).finished(), -base_hi, base_hi);
      const auto sc = safe_control(nominal, s.barriers, world::DynamicsModel::base(),
                                   world::slice_state(r, Slice::Base), gains, Slice::Base, -base_hi, base_hi,
                                   s.world);
      u.head<3>() = sc.u;
      u.tail<3>() = -kBrakeGain * r.ee_vel;
    } else {
      const Vec3 twist = s.base_twist;
      const Vec2 carrier = Eigen::Rotation2Dd(r.base.theta) * twist.head<2>();
      WorldState env = s.world;
      env.robots.front().base_vel = Vec3(carrier.x(), carrier.y(), twist.z());
      Vec3 a;
      if (s.speed_up) {
        a = r.ee_vel.norm() > 1e-9 ? Vec3(limits.ee_accel * r.ee_vel.normalized()) : Vec3::Zero();
      } else if (s.accelerate_only) {
        a = limits.ee_accel * s.push;
      } else {
        Vec3 dir = goal - r.ee_pos;
        dir = dir.norm() > 1e-9 ? Vec3(dir.normalized()) : Vec3::Zero();
        a = limits.ee_accel * dir - 2.0 * r.ee_vel;
      }
      const VectorXd nominal = clamp(a, -ee_hi, ee_hi);
      const auto sc = safe_control(nominal, s.barriers, world::DynamicsModel::end_effector(carrier),
                                   world::slice_state(r, Slice::Ee), gains, Slice::Ee, -ee_hi, ee_hi, env);
      u.head<3>() = twist;
      u.tail<3>() = sc.u;
    }
    controls["r"] = u;
    for (std::size_t i = 1; i < s.world.robots.size(); ++i) {
      // Other robots drive straight ahead.
      controls[s.world.robots[i].id] = (VectorXd(6) << 0.2, 0.0, 0.0, 0.0, 0.0, 0.0).finished();
    }
    s.world = world::step(s.world, controls, kDt);
  }
  return min_h;
}

}  // namespace

const std::vector<std::string>& invariance_kinds() {
  static const std::vector<std::string> kinds = {
      "position_box_base", "position_box_ee", "velocity_box",   "workspace_base", "workspace_ee",
      "keep_out_base",     "keep_out_ee",     "separation",     "keep_away_base", "keep_away_ee",
      "speed_cap",         "reach"};
  return kinds;
}

InvarianceResult run_invariance(const std::string& kind, int trials, std::uint64_t seed, double duration,
                                double floor) {
  std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
  InvarianceResult out{kind, trials, 0, INFINITY};
  for (int t = 0; t < trials; ++t) {
    Setup s;
    do {
      s = sample(kind, rng);
    } while (!admissible(s));
    const double h = simulate(std::move(s), duration);
    out.min_h = std::min(out.min_h, h);
    if (h < floor) ++out.failures;
  }
  return out;
}

}  // namespace safer::testing
