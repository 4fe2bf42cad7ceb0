#pragma once

#include <Eigen/Dense>

#include <variant>
#include <vector>

namespace safer::geom {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

struct Point {
  Vec2 p;
};

struct Circle {
  Vec2 center;
  double radius = 0.0;
};

/// Convex polygon, vertices counter-clockwise.
struct Polygon {
  std::vector<Vec2> vertices;
};

using Shape = std::variant<Point, Circle, Polygon>;

/// Signed distance from a query point to a shape together with its first and
/// second derivatives with respect to the query point. The Hessian is zero
/// wherever the closest feature is an edge or the point is inside.
struct PointDistance {
  double distance = 0.0;
  Vec2 gradient = Vec2::Zero();
  Eigen::Matrix2d hessian = Eigen::Matrix2d::Zero();
};

/// Throws GeometryError unless the polygon has >= 3 vertices, is strictly
/// convex and counter-clockwise.
void validate_polygon(const Polygon& poly);
bool is_convex_ccw(const Polygon& poly);

/// Convex hull (Andrew's monotone chain), counter-clockwise, collinear points
/// dropped.
Polygon convex_hull(std::vector<Vec2> points);

/// Regular polygon circumscribing the circle.
Polygon circumscribe(const Circle& circle, int sides = 16);

Polygon translate(const Polygon& poly, const Vec2& offset);
/// Rotation about the origin followed by translation.
Polygon transform(const Polygon& poly, double theta, const Vec2& offset);

Vec2 centroid(const Polygon& poly);
bool contains(const Polygon& poly, const Vec2& p, double tol = 0.0);

/// Signed distance from point to polygon: positive outside, negative inside.
PointDistance point_polygon(const Vec2& p, const Polygon& poly);
PointDistance point_shape(const Vec2& p, const Shape& shape);

/// Positive gap when disjoint, negative penetration depth when overlapping.
/// Symmetric in its arguments.
double signed_distance(const Shape& a, const Shape& b);

/// Smallest enclosing convex polygon of the shape (circles are circumscribed).
Polygon enclosing_polygon(const Shape& shape);

}  // namespace safer::geom
