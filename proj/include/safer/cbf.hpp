#pragma once

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "safer/world.hpp"

namespace safer::cbf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// The robot and state slice a barrier constrains. `radius` is the subject's
/// footprint radius (base) or 0 for the end-effector point.
struct Subject {
  std::string robot;
  world::Slice slice = world::Slice::Base;
  double radius = 0.0;

  static Subject of(const world::WorldState& world, const std::string& robot, world::Slice slice);
};

/// Lie derivatives of h at one state.
///   degree 1:  lf = L_f h (including any explicit time drift), lg = L_g h
///   degree 2:  lf = hdot = L_f h, lf2 = L_f^2 h, lglf = L_g L_f h
struct LieTerms {
  double h = 0.0;
  double lf = 0.0;
  VectorXd lg;
  double lf2 = 0.0;
  VectorXd lglf;
};

/// Barrier h over a subject's slice state. The world snapshot supplies any
/// other entities h depends on (live human positions, other robots).
struct BarrierFunction {
  using ValueFn = std::function<double(const VectorXd& x, const world::WorldState& env)>;
  using LieFn = std::function<LieTerms(const VectorXd& x, const world::WorldState& env,
                                       const world::DynamicsModel& dyn)>;

  std::string name;
  Subject subject;
  int relative_degree = 1;
  ValueFn value;
  /// Analytic Lie derivatives. Empty for user-supplied barriers, which are
  /// differentiated numerically.
  LieFn lie;

  /// h at the subject's current state in `env`.
  double eval(const world::WorldState& env) const;
};

inline constexpr double kDefaultGamma = 2.0;
inline constexpr std::array<double, 2> kDefaultPoles = {-2.0, -2.0};

/// K = [k0, k1] for the closed loop hddot + k1 hdot + k0 h = 0 with the given
/// poles: k0 = l1 * l2, k1 = -(l1 + l2). Both poles must be strictly negative.
std::array<double, 2> pole_placement_gains(double pole1, double pole2);

struct GainSpec {
  std::optional<double> gamma;                // relative degree 1
  std::optional<std::array<double, 2>> k;     // relative degree 2: [k0, k1]

  /// gamma = 2, K from poles (-2, -2) = [4, 4].
  static GainSpec defaults();
  static GainSpec from_poles(double pole1, double pole2, double gamma = kDefaultGamma);
  /// Throws DimensionError if the gains needed for `degree` are missing or not
  /// strictly positive.
  void validate(int degree) const;
};

/// a . u + b >= 0
struct ConstraintRow {
  VectorXd a;
  double b = 0.0;
  std::string source;
};

inline constexpr double kFiniteDifferenceStep = 1e-6;

/// Degree 1: a = L_g h, b = L_f h + gamma h.
/// Degree 2: a = L_g L_f h, b = L_f^2 h + k0 h + k1 hdot.
/// Uses bf.lie when present, otherwise central finite differences.
ConstraintRow linearize(const BarrierFunction& bf, const world::DynamicsModel& dyn, const VectorXd& x,
                        const GainSpec& gains, const world::WorldState& env = {});

/// Lie derivatives by central finite differences (h treated as depending on
/// x only, env held fixed).
LieTerms finite_difference_lie(const BarrierFunction& bf, const world::DynamicsModel& dyn,
                               const VectorXd& x, const world::WorldState& env,
                               double step = kFiniteDifferenceStep);

// ---------------------------------------------------------------------------
// QP safety filter: min 1/2 ||u - u_nom||^2  s.t.  rows, lower <= u <= upper

struct QpProblem {
  VectorXd u_nom;
  std::vector<ConstraintRow> rows;
  std::optional<VectorXd> lower;
  std::optional<VectorXd> upper;
};

enum class QpStatus { Optimal, Infeasible };

struct QpSolution {
  VectorXd u_star;
  /// Working set at termination. Indices < rows.size() are problem rows; box
  /// bounds follow as rows.size() + 2*i (lower) and rows.size() + 2*i + 1 (upper).
  std::vector<int> active;
  /// One multiplier per row then per box side, zero off the active set.
  VectorXd multipliers;
  QpStatus status = QpStatus::Optimal;
  int iterations = 0;
};

struct QpOptions {
  int max_iterations = 100;
};

/// Primal active-set method with a phase-1 feasibility pass. Returns
/// Infeasible (with u_star at the least-violating point found) when the
/// constraint polytope is empty. Throws SolverError if the iteration cap is hit.
QpSolution solve_qp(const QpProblem& problem, const QpOptions& options = {});

/// Stacked constraint matrix/offset including box sides, in QpSolution index order.
void stack_constraints(const QpProblem& problem, MatrixXd& A, VectorXd& b);

inline constexpr double kBrakeGain = 10.0;  // 1/s

struct SafeControl {
  VectorXd u;
  std::vector<ConstraintRow> rows;
  QpSolution qp;
  bool infeasible = false;
};

/// Linearizes every barrier, solves the QP with the box limits, and falls back
/// to braking (zero twist for bases, -kBrakeGain * ee_vel clamped to the box
/// for end-effectors) when the QP is infeasible. `gains` holds one spec per
/// barrier or a single spec applied to all.
SafeControl safe_control(const VectorXd& u_nom, std::span<const BarrierFunction> barriers,
                         const world::DynamicsModel& dyn, const VectorXd& x,
                         std::span<const GainSpec> gains, world::Slice slice,
                         const std::optional<VectorXd>& lower, const std::optional<VectorXd>& upper,
                         const world::WorldState& env = {});

}  // namespace safer::cbf
