#include "safer/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "safer/error.hpp"

namespace safer::geom {

namespace {

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// Closest point on segment [a, b] to p, and whether it is an endpoint.
Vec2 closest_on_segment(const Vec2& p, const Vec2& a, const Vec2& b, bool& at_vertex) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  at_vertex = t <= 0.0 || t >= 1.0;
  t = std::clamp(t, 0.0, 1.0);
  return a + t * ab;
}

Vec2 outward_normal(const Vec2& a, const Vec2& b) {
  const Vec2 e = b - a;
  return Vec2(e.y(), -e.x()).normalized();
}

double polygon_polygon(const Polygon& a, const Polygon& b) {
  // Separating-axis test over edge normals of both polygons.
  double min_overlap = std::numeric_limits<double>::infinity();
  bool separated = false;
  for (const Polygon* poly : {&a, &b}) {
    const auto& v = poly->vertices;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Vec2 n = outward_normal(v[i], v[(i + 1) % v.size()]);
      double amin = std::numeric_limits<double>::infinity(), amax = -amin;
      double bmin = amin, bmax = -amin;
      for (const auto& p : a.vertices) {
        amin = std::min(amin, n.dot(p));
        amax = std::max(amax, n.dot(p));
      }
      for (const auto& p : b.vertices) {
        bmin = std::min(bmin, n.dot(p));
        bmax = std::max(bmax, n.dot(p));
      }
      const double overlap = std::min(amax - bmin, bmax - amin);
      if (overlap <= 0.0) separated = true;
      min_overlap = std::min(min_overlap, overlap);
    }
  }
  if (!separated) return -min_overlap;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : a.vertices) best = std::min(best, point_polygon(p, b).distance);
  for (const auto& p : b.vertices) best = std::min(best, point_polygon(p, a).distance);
  return best;
}

}  // namespace

bool is_convex_ccw(const Polygon& poly) {
  const auto& v = poly.vertices;
  if (v.size() < 3) return false;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2& a = v[i];
    const Vec2& b = v[(i + 1) % v.size()];
    const Vec2& c = v[(i + 2) % v.size()];
    if (!a.allFinite()) return false;
    if (cross(b - a, c - b) <= 1e-12) return false;
  }
  // Reject self-intersecting star shapes: total turning must be exactly 2*pi.
  double turning = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 e0 = v[(i + 1) % v.size()] - v[i];
    const Vec2 e1 = v[(i + 2) % v.size()] - v[(i + 1) % v.size()];
    turning += std::atan2(cross(e0, e1), e0.dot(e1));
  }
  return std::abs(turning - 2.0 * std::numbers::pi) < 1e-6;
}

void validate_polygon(const Polygon& poly) {
  if (poly.vertices.size() < 3) {
    throw GeometryError("polygon needs at least 3 vertices, got " +
                        std::to_string(poly.vertices.size()));
  }
  if (!is_convex_ccw(poly)) throw GeometryError("polygon is not convex and counter-clockwise");
}

Polygon convex_hull(std::vector<Vec2> points) {
  std::sort(points.begin(), points.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  points.erase(std::unique(points.begin(), points.end()), points.end());
  if (points.size() < 3) throw GeometryError("convex hull needs 3 distinct points");
  std::vector<Vec2> hull(2 * points.size());
  std::size_t k = 0;
  for (const auto& p : points) {
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = points.size() - 1, t = k + 1; i-- > 0;) {
    const Vec2& p = points[i];
    while (k >= t && cross(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0.0) --k;
    hull[k++] = p;
  }
  hull.resize(k - 1);
  if (hull.size() < 3) throw GeometryError("convex hull is degenerate");
  return Polygon{std::move(hull)};
}

Polygon circumscribe(const Circle& circle, int sides) {
  if (sides < 3) throw GeometryError("circumscribed polygon needs >= 3 sides");
  // Vertices on the radius r / cos(pi/n) circle so the edges are tangent.
  const double big = circle.radius / std::cos(std::numbers::pi / sides);
  Polygon out;
  for (int i = 0; i < sides; ++i) {
    const double a = 2.0 * std::numbers::pi * i / sides;
    out.vertices.push_back(circle.center + big * Vec2(std::cos(a), std::sin(a)));
  }
  return out;
}

Polygon translate(const Polygon& poly, const Vec2& offset) {
  Polygon out = poly;
  for (auto& v : out.vertices) v += offset;
  return out;
}

Polygon transform(const Polygon& poly, double theta, const Vec2& offset) {
  const Eigen::Rotation2Dd rot(theta);
  Polygon out;
  out.vertices.reserve(poly.vertices.size());
  for (const auto& v : poly.vertices) out.vertices.push_back(rot * v + offset);
  return out;
}

Vec2 centroid(const Polygon& poly) {
  double area = 0.0;
  Vec2 c = Vec2::Zero();
  const auto& v = poly.vertices;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double w = cross(v[i], v[(i + 1) % v.size()]);
    area += w;
    c += w * (v[i] + v[(i + 1) % v.size()]);
  }
  if (std::abs(area) < 1e-15) {
    Vec2 mean = Vec2::Zero();
    for (const auto& p : v) mean += p;
    return mean / static_cast<double>(v.size());
  }
  return c / (3.0 * area);
}

bool contains(const Polygon& poly, const Vec2& p, double tol) {
  return point_polygon(p, poly).distance <= tol;
}

PointDistance point_polygon(const Vec2& p, const Polygon& poly) {
  const auto& v = poly.vertices;
  if (v.size() < 3) throw GeometryError("polygon needs at least 3 vertices");
  PointDistance out;
  double max_side = -std::numeric_limits<double>::infinity();
  std::size_t max_edge = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double s = outward_normal(v[i], v[(i + 1) % v.size()]).dot(p - v[i]);
    if (s > max_side) {
      max_side = s;
      max_edge = i;
    }
  }
  if (max_side <= 0.0) {
    out.distance = max_side;
    out.gradient = outward_normal(v[max_edge], v[(max_edge + 1) % v.size()]);
    return out;
  }
  double best = std::numeric_limits<double>::infinity();
  Vec2 best_q = p;
  bool best_vertex = false;
  for (std::size_t i = 0; i < v.size(); ++i) {
    bool at_vertex = false;
    const Vec2 q = closest_on_segment(p, v[i], v[(i + 1) % v.size()], at_vertex);
    const double d = (p - q).norm();
    if (d < best) {
      best = d;
      best_q = q;
      best_vertex = at_vertex;
    }
  }
  out.distance = best;
  out.gradient = (p - best_q) / best;
  if (best_vertex) {
    out.hessian = (Eigen::Matrix2d::Identity() - out.gradient * out.gradient.transpose()) / best;
  }
  return out;
}

PointDistance point_shape(const Vec2& p, const Shape& shape) {
  return std::visit(
      [&](const auto& s) -> PointDistance {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Polygon>) {
          return point_polygon(p, s);
        } else {
          Vec2 center;
          double radius = 0.0;
          if constexpr (std::is_same_v<T, Point>) {
            center = s.p;
          } else {
            center = s.center;
            radius = s.radius;
          }
          PointDistance out;
          const Vec2 d = p - center;
          const double n = d.norm();
          out.distance = n - radius;
          if (n > 0.0) {
            out.gradient = d / n;
            out.hessian = (Eigen::Matrix2d::Identity() - out.gradient * out.gradient.transpose()) / n;
          }
          return out;
        }
      },
      shape);
}

double signed_distance(const Shape& a, const Shape& b) {
  if (const auto* pa = std::get_if<Polygon>(&a)) validate_polygon(*pa);
  if (const auto* pb = std::get_if<Polygon>(&b)) validate_polygon(*pb);
  const auto* poly_a = std::get_if<Polygon>(&a);
  const auto* poly_b = std::get_if<Polygon>(&b);
  if (poly_a && poly_b) return polygon_polygon(*poly_a, *poly_b);
  // At least one side reduces to a point with a radius.
  auto as_disc = [](const Shape& s, Vec2& c, double& r) {
    if (const auto* pt = std::get_if<Point>(&s)) {
      c = pt->p;
      r = 0.0;
      return true;
    }
    if (const auto* ci = std::get_if<Circle>(&s)) {
      c = ci->center;
      r = ci->radius;
      return true;
    }
    return false;
  };
  Vec2 c;
  double r = 0.0;
  if (as_disc(a, c, r)) return point_shape(c, b).distance - r;
  as_disc(b, c, r);
  return point_shape(c, a).distance - r;
}

Polygon enclosing_polygon(const Shape& shape) {
  return std::visit(
      [](const auto& s) -> Polygon {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Polygon>) {
          return convex_hull(s.vertices);
        } else if constexpr (std::is_same_v<T, Circle>) {
          return circumscribe(s);
        } else {
          throw GeometryError("a point has no enclosing polygon");
        }
      },
      shape);
}

}  // namespace safer::geom
