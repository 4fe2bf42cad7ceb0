#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "safer/cbf.hpp"
#include "safer/geometry.hpp"
#include "safer/world.hpp"

// Library of barriers with analytic Lie derivatives.
//
// Position barriers act on the subject point (base centre or ee). For a base
// subject they are relative degree 1 through the body-twist input; for an ee
// subject they are relative degree 2 through the acceleration input. Velocity
// barriers act on the ee arm velocity and are relative degree 1.
//
// Moving targets (humans, other robots) contribute their current velocity as
// drift: h is treated as a function of p - c(t) with c moving at constant
// velocity over one control tick.

namespace safer::cbf {

/// A shape that may move: evaluated against the live world each tick.
struct ShapeSource {
  std::string label;
  std::function<geom::Shape(const world::WorldState&)> shape;
  std::function<world::Vec2(const world::WorldState&)> velocity;

  static ShapeSource fixed(geom::Shape shape, std::string label = "shape");
  static ShapeSource human(const std::string& id);
  static ShapeSource robot_footprint(const std::string& id);
  static ShapeSource object(const std::string& id);
  /// Convex polygon encapsulating the entity's current footprint.
  static ShapeSource enclosing(const world::WorldState& world, const world::EntityHandle& entity);
};

struct AxisBound {
  int axis = 0;  // 0 = x, 1 = y, 2 = z (ee only)
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
};

/// h = p[axis] - lower and h = upper - p[axis] for every finite side.
std::vector<BarrierFunction> position_box(const Subject& subject, const std::vector<AxisBound>& bounds);

/// Ee only: h = v_max - v[axis] and h = v[axis] - v_min for every finite side.
std::vector<BarrierFunction> velocity_box(const Subject& subject, const std::vector<AxisBound>& bounds);

/// One barrier per edge of the convex region: h_i = inward distance to edge i
/// minus the subject radius.
std::vector<BarrierFunction> workspace_polygon(const Subject& subject, const geom::Polygon& region,
                                               const std::string& label = "workspace");

/// h = signed_distance(subject footprint, shape) - margin.
BarrierFunction keep_out(const Subject& subject, const ShapeSource& shape, double margin);

/// keep_out against another robot's base footprint.
BarrierFunction separation(const Subject& subject, const std::string& other_robot, double d_min);

/// h = distance(subject footprint, human) - radius.
BarrierFunction keep_away_human(const Subject& subject, const std::string& human, double radius);

/// Ee only: h = v_cap(d) - ||v|| with v_cap(d) = v_max * min(1, d / d_slow), d
/// the planar distance from the ee to the human.
BarrierFunction speed_cap_near(const Subject& subject, const std::string& human, double v_max,
                               double d_slow = 1.5);

/// Ee only: h = (R^2 - ||p_xy - base_xy||^2) / (2 R). Keeps the ee within reach
/// of its own base; the base carries the ee, so base motion is not drift.
BarrierFunction reach(const Subject& subject, double radius);

}  // namespace safer::cbf
