#include "safer/cbf.hpp"

#include <algorithm>
#include <cmath>

#include "safer/error.hpp"

namespace safer::cbf {

Subject Subject::of(const world::WorldState& w, const std::string& robot, world::Slice slice) {
  const auto& r = w.robot(robot);
  return Subject{robot, slice, slice == world::Slice::Base ? r.base_radius : 0.0};
}

double BarrierFunction::eval(const world::WorldState& env) const {
  return value(world::slice_state(env.robot(subject.robot), subject.slice), env);
}

std::array<double, 2> pole_placement_gains(double pole1, double pole2) {
  if (!(pole1 < 0.0) || !(pole2 < 0.0)) {
    throw DimensionError("poles must be strictly negative, got (" + std::to_string(pole1) + ", " +
                         std::to_string(pole2) + ")");
  }
  return {pole1 * pole2, -(pole1 + pole2)};
}

GainSpec GainSpec::defaults() { return from_poles(kDefaultPoles[0], kDefaultPoles[1], kDefaultGamma); }

GainSpec GainSpec::from_poles(double pole1, double pole2, double gamma) {
  GainSpec g;
  g.gamma = gamma;
  g.k = pole_placement_gains(pole1, pole2);
  return g;
}

void GainSpec::validate(int degree) const {
  if (degree == 1) {
    if (!gamma) throw DimensionError("relative degree 1 barrier needs gamma");
    if (!(*gamma > 0.0)) throw DimensionError("gamma must be positive");
  } else if (degree == 2) {
    if (!k) throw DimensionError("relative degree 2 barrier needs K = [k0, k1]");
    if (!((*k)[0] > 0.0) || !((*k)[1] > 0.0)) throw DimensionError("K must be strictly positive");
  } else {
    throw DimensionError("relative degree must be 1 or 2, got " + std::to_string(degree));
  }
}

namespace {

template <typename Fn>
VectorXd central_gradient(Fn&& fn, const VectorXd& x, double step) {
  VectorXd grad(x.size());
  VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + step;
    const double up = fn(probe);
    probe(i) = x(i) - step;
    const double down = fn(probe);
    probe(i) = x(i);
    grad(i) = (up - down) / (2.0 * step);
  }
  return grad;
}

void check_dims(const BarrierFunction& bf, const world::DynamicsModel& dyn, const VectorXd& x) {
  if (x.size() != dyn.state_dim) {
    throw DimensionError("barrier '" + bf.name + "': state has dimension " + std::to_string(x.size()) +
                         ", dynamics expect " + std::to_string(dyn.state_dim));
  }
}

}  // namespace

LieTerms finite_difference_lie(const BarrierFunction& bf, const world::DynamicsModel& dyn,
                               const VectorXd& x, const world::WorldState& env, double step) {
  check_dims(bf, dyn, x);
  auto h = [&](const VectorXd& y) { return bf.value(y, env); };
  LieTerms out;
  out.h = h(x);
  const MatrixXd g = dyn.g(x);
  if (bf.relative_degree == 1) {
    const VectorXd grad = central_gradient(h, x, step);
    out.lf = grad.dot(dyn.f(x));
    out.lg = g.transpose() * grad;
    return out;
  }
  // Nested differences: the outer step is widened so the inner truncation
  // noise does not dominate.
  auto lf_h = [&](const VectorXd& y) { return central_gradient(h, y, step).dot(dyn.f(y)); };
  const double outer = std::max(step, 1e-4);
  const VectorXd grad_lf = central_gradient(lf_h, x, outer);
  out.lf = lf_h(x);
  out.lf2 = grad_lf.dot(dyn.f(x));
  out.lglf = g.transpose() * grad_lf;
  return out;
}

ConstraintRow linearize(const BarrierFunction& bf, const world::DynamicsModel& dyn, const VectorXd& x,
                        const GainSpec& gains, const world::WorldState& env) {
  gains.validate(bf.relative_degree);
  check_dims(bf, dyn, x);
  const LieTerms lie = bf.lie ? bf.lie(x, env, dyn) : finite_difference_lie(bf, dyn, x, env);
  ConstraintRow row;
  row.source = bf.name;
  if (bf.relative_degree == 1) {
    row.a = lie.lg;
    row.b = lie.lf + *gains.gamma * lie.h;
  } else {
    const auto& k = *gains.k;
    row.a = lie.lglf;
    row.b = lie.lf2 + k[0] * lie.h + k[1] * lie.lf;
  }
  if (row.a.size() != dyn.control_dim) {
    throw DimensionError("barrier '" + bf.name + "' produced a row of dimension " +
                         std::to_string(row.a.size()) + " for control dimension " +
                         std::to_string(dyn.control_dim));
  }
  if (!row.a.allFinite() || !std::isfinite(row.b)) {
    throw DimensionError("barrier '" + bf.name + "' has a non-finite derivative");
  }
  return row;
}

SafeControl safe_control(const VectorXd& u_nom, std::span<const BarrierFunction> barriers,
                         const world::DynamicsModel& dyn, const VectorXd& x,
                         std::span<const GainSpec> gains, world::Slice slice,
                         const std::optional<VectorXd>& lower, const std::optional<VectorXd>& upper,
                         const world::WorldState& env) {
  if (!barriers.empty() && gains.size() != 1 && gains.size() != barriers.size()) {
    throw DimensionError("need one gain spec per barrier or a single shared spec");
  }
  if (u_nom.size() != dyn.control_dim) throw DimensionError("nominal control has the wrong dimension");
  SafeControl out;
  QpProblem problem{u_nom, {}, lower, upper};
  for (std::size_t i = 0; i < barriers.size(); ++i) {
    const auto& bf = barriers[i];
    if (bf.subject.robot != barriers.front().subject.robot || bf.subject.slice != slice) {
      throw DimensionError("barrier '" + bf.name + "' targets a different robot or slice");
    }
    problem.rows.push_back(linearize(bf, dyn, x, gains.size() == 1 ? gains[0] : gains[i], env));
  }
  out.qp = solve_qp(problem);
  out.rows = problem.rows;
  if (out.qp.status == QpStatus::Optimal) {
    out.u = out.qp.u_star;
    return out;
  }
  out.infeasible = true;
  if (slice == world::Slice::Base) {
    out.u = VectorXd::Zero(dyn.control_dim);
  } else {
    out.u = -kBrakeGain * x.tail(dyn.control_dim);
  }
  if (lower) out.u = out.u.cwiseMax(*lower);
  if (upper) out.u = out.u.cwiseMin(*upper);
  return out;
}

}  // namespace safer::cbf
