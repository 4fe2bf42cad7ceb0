#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "safer/barriers.hpp"
#include "safer/cbf.hpp"
#include "safer/world.hpp"

// Nominal controllers and the per-robot safety filter used by execution and
// the sim command.

namespace safer::control {

struct Gains {
  double base_kp = 1.5;     // 1/s
  double base_k_theta = 2.0;
  double ee_kp = 4.0;       // 1/s^2
  double ee_kd = 4.0;       // 1/s
};

/// Body-frame twist toward the goal pose, clamped to the base limits.
world::Vec3 base_twist_to(const world::RobotState& robot, const world::Pose2& goal, const Gains& gains = {});
/// PD acceleration toward a world point, clamped to the ee limits.
world::Vec3 ee_accel_to(const world::RobotState& robot, const world::Vec3& goal, const Gains& gains = {});

/// The robot's own limits as barriers on the ee: speed box, height band, reach.
std::vector<cbf::BarrierFunction> intrinsic_barriers(const world::WorldState& world, const std::string& robot);

struct Filtered {
  Eigen::VectorXd u;  // 6-vector: twist then ee acceleration
  bool base_infeasible = false;
  bool ee_infeasible = false;
};

/// Filters the 6-vector nominal through the base and ee barriers, each slice
/// in its own QP. Base barriers are ignored for fixed robots. The ee QP sees
/// the filtered base motion as its carrier velocity.
Filtered filter(const world::WorldState& world, const std::string& robot, const Eigen::VectorXd& nominal,
                std::span<const cbf::BarrierFunction> base_barriers, std::span<const cbf::BarrierFunction> ee_barriers,
                const cbf::GainSpec& gains = cbf::GainSpec::defaults());

// ---------------------------------------------------------------------------
// Single-robot closed loop for inspecting a barrier set on its own.

enum class Policy { Goal, Adversarial };
Policy policy_from_string(const std::string& s);

struct SimSpec {
  std::string robot;
  Policy policy = Policy::Goal;
  std::optional<world::Pose2> base_goal;  // Goal policy; default: hold
  std::optional<world::Vec3> ee_goal;
  double duration = 10.0;
  double dt = 0.01;
  bool intrinsic = true;  // add the robot's own ee limits
};

struct SimRow {
  double t = 0.0;
  std::vector<double> h;  // one per barrier, in SimResult::names order
  Eigen::VectorXd u_nom;
  Eigen::VectorXd u;
};

struct SimResult {
  std::vector<std::string> names;
  std::vector<SimRow> rows;
  double min_h = 0.0;
  int infeasible_ticks = 0;
};

/// Runs one robot under `barriers` (base and ee mixed). The adversarial
/// policy pushes each slice straight down the gradient of its lowest barrier
/// at full actuation. Other robots hold still; humans follow their paths.
SimResult simulate(world::WorldState world, const SimSpec& spec, const std::vector<cbf::BarrierFunction>& barriers,
                   const Gains& gains = {}, const cbf::GainSpec& cbf_gains = cbf::GainSpec::defaults());

/// Header t,h:<name>...,unom_0..5,u_0..5 then one row per tick.
std::string to_csv(const SimResult& result);

}  // namespace safer::control
