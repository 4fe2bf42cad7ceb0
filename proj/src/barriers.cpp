#include "safer/barriers.hpp"

#include <cmath>

#include "safer/error.hpp"

namespace safer::cbf {

using world::Slice;
using world::Vec2;
using world::Vec3;

namespace {

struct Field {
  double value = 0.0;
  Vec3 grad = Vec3::Zero();
  Eigen::Matrix3d hess = Eigen::Matrix3d::Zero();
};

using FieldFn = std::function<Field(const Vec3& p, const world::WorldState& env)>;
using FrameVelocityFn = std::function<Vec2(const world::WorldState& env)>;

Vec3 subject_point(const VectorXd& x, Slice slice) {
  if (slice == Slice::Base) return {x(0), x(1), 0.0};
  return x.head<3>();
}

// Position barrier h(x) = F(p - c(t)); c moves with `frame_velocity`.
BarrierFunction position_barrier(std::string name, const Subject& subject, FieldFn field,
                                 FrameVelocityFn frame_velocity) {
  BarrierFunction bf;
  bf.name = std::move(name);
  bf.subject = subject;
  bf.relative_degree = subject.slice == Slice::Base ? 1 : 2;
  const Slice slice = subject.slice;
  bf.value = [field, slice](const VectorXd& x, const world::WorldState& env) {
    return field(subject_point(x, slice), env).value;
  };
  bf.lie = [field, frame_velocity, slice](const VectorXd& x, const world::WorldState& env,
                                          const world::DynamicsModel& dyn) {
    const Field F = field(subject_point(x, slice), env);
    Vec3 vc = Vec3::Zero();
    if (frame_velocity) vc.head<2>() = frame_velocity(env);
    const VectorXd f = dyn.f(x);
    const MatrixXd g = dyn.g(x);
    LieTerms out;
    out.h = F.value;
    if (slice == Slice::Base) {
      VectorXd grad = VectorXd::Zero(x.size());
      grad.head<2>() = F.grad.head<2>();
      out.lf = grad.dot(f) - F.grad.dot(vc);
      out.lg = g.transpose() * grad;
      return out;
    }
    const Vec3 rel = Vec3(f.head<3>()) - vc;
    VectorXd grad_lf(x.size());
    grad_lf << F.hess * rel, F.grad;
    out.lf = F.grad.dot(rel);
    out.lf2 = rel.dot(F.hess * rel) + F.grad.dot(f.tail<3>());
    out.lglf = g.transpose() * grad_lf;
    return out;
  };
  return bf;
}

// Velocity barrier on the ee: h = psi(p, v). `eval` fills value and gradients.
struct VelocityField {
  double value = 0.0;
  Vec3 grad_p = Vec3::Zero();
  Vec3 grad_v = Vec3::Zero();
  Vec3 frame_velocity = Vec3::Zero();  // velocity of whatever p is measured against
};
using VelocityFieldFn = std::function<VelocityField(const Vec3& p, const Vec3& v, const world::WorldState&)>;

BarrierFunction velocity_barrier(std::string name, const Subject& subject, VelocityFieldFn field) {
  if (subject.slice != Slice::Ee) {
    throw DimensionError("velocity barriers apply to end-effector subjects only");
  }
  BarrierFunction bf;
  bf.name = std::move(name);
  bf.subject = subject;
  bf.relative_degree = 1;
  bf.value = [field](const VectorXd& x, const world::WorldState& env) {
    return field(x.head<3>(), x.tail<3>(), env).value;
  };
  bf.lie = [field](const VectorXd& x, const world::WorldState& env, const world::DynamicsModel& dyn) {
    const VelocityField F = field(x.head<3>(), x.tail<3>(), env);
    const VectorXd f = dyn.f(x);
    VectorXd grad(6);
    grad << F.grad_p, F.grad_v;
    LieTerms out;
    out.h = F.value;
    out.lf = grad.dot(f) - F.grad_p.dot(F.frame_velocity);
    out.lg = dyn.g(x).transpose() * grad;
    return out;
  };
  return bf;
}

void require_positive(double v, const std::string& what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw GeometryError(what + " must be strictly positive, got " + std::to_string(v));
  }
}

Field shape_field(const geom::Shape& shape, const Vec3& p, double offset) {
  const auto d = geom::point_shape(p.head<2>(), shape);
  Field F;
  F.value = d.distance - offset;
  F.grad.head<2>() = d.gradient;
  F.hess.topLeftCorner<2, 2>() = d.hessian;
  return F;
}

std::string axis_name(int axis) { return std::string(1, "xyz"[axis]); }

}  // namespace

ShapeSource ShapeSource::fixed(geom::Shape shape, std::string label) {
  if (const auto* poly = std::get_if<geom::Polygon>(&shape)) geom::validate_polygon(*poly);
  if (const auto* c = std::get_if<geom::Circle>(&shape)) require_positive(c->radius, "circle radius");
  return ShapeSource{std::move(label), [s = std::move(shape)](const world::WorldState&) { return s; },
                     nullptr};
}

ShapeSource ShapeSource::human(const std::string& id) {
  return ShapeSource{id,
                     [id](const world::WorldState& w) -> geom::Shape {
                       return geom::Point{w.human(id).position};
                     },
                     [id](const world::WorldState& w) { return w.human(id).velocity; }};
}

ShapeSource ShapeSource::robot_footprint(const std::string& id) {
  return ShapeSource{id, [id](const world::WorldState& w) { return w.robot(id).footprint(); },
                     [id](const world::WorldState& w) { return world::base_linear_velocity(w.robot(id)); }};
}

ShapeSource ShapeSource::object(const std::string& id) {
  return ShapeSource{id, [id](const world::WorldState& w) { return w.object(id).world_footprint(); },
                     nullptr};
}

ShapeSource ShapeSource::enclosing(const world::WorldState& w, const world::EntityHandle& e) {
  switch (e.kind) {
    case world::EntityKind::Static:
      return fixed(w.static_entity(e.id).polygon, e.id);
    case world::EntityKind::Object: {
      const std::string id = e.id;
      return ShapeSource{id,
                         [id](const world::WorldState& env) -> geom::Shape {
                           return geom::enclosing_polygon(env.object(id).world_footprint());
                         },
                         nullptr};
    }
    case world::EntityKind::Human:
      return human(e.id);
    case world::EntityKind::Robot:
      return robot_footprint(e.id);
  }
  throw ResolutionError("unsupported entity");
}

std::vector<BarrierFunction> position_box(const Subject& subject, const std::vector<AxisBound>& bounds) {
  std::vector<BarrierFunction> out;
  const int dims = subject.slice == Slice::Base ? 2 : 3;
  for (const auto& bound : bounds) {
    if (bound.axis < 0 || bound.axis >= dims) {
      throw GeometryError("position_box axis " + std::to_string(bound.axis) + " out of range");
    }
    if (!(bound.lower < bound.upper)) throw GeometryError("position_box needs lower < upper");
    const int axis = bound.axis;
    const double r = subject.slice == Slice::Base ? subject.radius : 0.0;
    if (std::isfinite(bound.lower)) {
      out.push_back(position_barrier(
          "position_box:" + axis_name(axis) + ">=" + std::to_string(bound.lower), subject,
          [axis, lo = bound.lower, r](const Vec3& p, const world::WorldState&) {
            Field F;
            F.value = p(axis) - lo - r;
            F.grad(axis) = 1.0;
            return F;
          },
          nullptr));
    }
    if (std::isfinite(bound.upper)) {
      out.push_back(position_barrier(
          "position_box:" + axis_name(axis) + "<=" + std::to_string(bound.upper), subject,
          [axis, hi = bound.upper, r](const Vec3& p, const world::WorldState&) {
            Field F;
            F.value = hi - p(axis) - r;
            F.grad(axis) = -1.0;
            return F;
          },
          nullptr));
    }
  }
  return out;
}

std::vector<BarrierFunction> velocity_box(const Subject& subject, const std::vector<AxisBound>& bounds) {
  std::vector<BarrierFunction> out;
  for (const auto& bound : bounds) {
    if (bound.axis < 0 || bound.axis > 2) throw GeometryError("velocity_box axis out of range");
    if (!(bound.lower < bound.upper)) throw GeometryError("velocity_box needs lower < upper");
    const int axis = bound.axis;
    if (std::isfinite(bound.upper)) {
      out.push_back(velocity_barrier(
          "velocity_box:v" + axis_name(axis) + "<=" + std::to_string(bound.upper), subject,
          [axis, hi = bound.upper](const Vec3&, const Vec3& v, const world::WorldState&) {
            VelocityField F;
            F.value = hi - v(axis);
            F.grad_v(axis) = -1.0;
            return F;
          }));
    }
    if (std::isfinite(bound.lower)) {
      out.push_back(velocity_barrier(
          "velocity_box:v" + axis_name(axis) + ">=" + std::to_string(bound.lower), subject,
          [axis, lo = bound.lower](const Vec3&, const Vec3& v, const world::WorldState&) {
            VelocityField F;
            F.value = v(axis) - lo;
            F.grad_v(axis) = 1.0;
            return F;
          }));
    }
  }
  return out;
}

std::vector<BarrierFunction> workspace_polygon(const Subject& subject, const geom::Polygon& region,
                                               const std::string& label) {
  geom::validate_polygon(region);
  std::vector<BarrierFunction> out;
  const auto& v = region.vertices;
  const double r = subject.slice == Slice::Base ? subject.radius : 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 a = v[i];
    const Vec2 e = v[(i + 1) % v.size()] - a;
    const Vec2 inward = Vec2(-e.y(), e.x()).normalized();
    out.push_back(position_barrier(
        "workspace:" + label + ":edge" + std::to_string(i), subject,
        [a, inward, r](const Vec3& p, const world::WorldState&) {
          Field F;
          F.value = inward.dot(p.head<2>() - a) - r;
          F.grad.head<2>() = inward;
          return F;
        },
        nullptr));
  }
  return out;
}

BarrierFunction keep_out(const Subject& subject, const ShapeSource& shape, double margin) {
  require_positive(margin, "keep_out margin");
  const double offset = subject.radius + margin;
  return position_barrier(
      "keep_out:" + shape.label, subject,
      [source = shape.shape, offset](const Vec3& p, const world::WorldState& env) {
        return shape_field(source(env), p, offset);
      },
      shape.velocity);
}

BarrierFunction separation(const Subject& subject, const std::string& other_robot, double d_min) {
  require_positive(d_min, "separation distance");
  if (other_robot == subject.robot) throw GeometryError("separation needs two distinct robots");
  BarrierFunction bf = keep_out(subject, ShapeSource::robot_footprint(other_robot), d_min);
  bf.name = "separation:" + other_robot;
  return bf;
}

BarrierFunction keep_away_human(const Subject& subject, const std::string& human, double radius) {
  require_positive(radius, "keep_away radius");
  BarrierFunction bf = keep_out(subject, ShapeSource::human(human), radius);
  bf.name = "keep_away:" + human;
  return bf;
}

BarrierFunction speed_cap_near(const Subject& subject, const std::string& human, double v_max,
                               double d_slow) {
  require_positive(v_max, "speed cap");
  require_positive(d_slow, "slow-down distance");
  return velocity_barrier(
      "speed_cap:" + human, subject,
      [human, v_max, d_slow](const Vec3& p, const Vec3& v, const world::WorldState& env) {
        const auto& h = env.human(human);
        const Vec2 rel = p.head<2>() - h.position;
        const double d = rel.norm();
        VelocityField F;
        const double speed = v.norm();
        F.value = v_max * std::min(1.0, d / d_slow) - speed;
        if (d < d_slow && d > 0.0) F.grad_p.head<2>() = (v_max / d_slow) * rel / d;
        if (speed > 1e-12) F.grad_v = -v / speed;
        F.frame_velocity.head<2>() = h.velocity;
        return F;
      });
}

BarrierFunction reach(const Subject& subject, double radius) {
  require_positive(radius, "reach radius");
  if (subject.slice != Slice::Ee) throw DimensionError("reach applies to end-effector subjects only");
  const std::string robot = subject.robot;
  return position_barrier(
      "reach", subject,
      [robot, radius](const Vec3& p, const world::WorldState& env) {
        const Vec2 rel = p.head<2>() - env.robot(robot).base.position();
        Field F;
        F.value = (radius * radius - rel.squaredNorm()) / (2.0 * radius);
        F.grad.head<2>() = -rel / radius;
        F.hess.topLeftCorner<2, 2>() = -Eigen::Matrix2d::Identity() / radius;
        return F;
      },
      [robot](const world::WorldState& env) { return world::base_linear_velocity(env.robot(robot)); });
}

}  // namespace safer::cbf
