#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace polygonet {

using Point = Eigen::Vector2i;
using Point2d = Eigen::Vector2d;
using PointList = std::vector<Point>;

inline std::int64_t cross(const Point& o, const Point& a, const Point& b) {
  return static_cast<std::int64_t>(a.x() - o.x()) * (b.y() - o.y()) -
         static_cast<std::int64_t>(a.y() - o.y()) * (b.x() - o.x());
}

inline std::int64_t squared_distance(const Point& a, const Point& b) {
  const std::int64_t dx = a.x() - b.x();
  const std::int64_t dy = a.y() - b.y();
  return dx * dx + dy * dy;
}

/// Convex hull (Andrew's monotone chain), counterclockwise in the y-up sense,
/// collinear points dropped. Degenerate sets return 1 or 2 vertices.
PointList convex_hull(std::span<const Point> points);

/// Thickness test for a convex polygon: true iff some hull edge direction
/// admits a strip of width <= nu containing every vertex. Exact in integers
/// except for the final comparison against nu^2.
bool hull_width_at_most(std::span<const Point> hull, double nu);

/// Minimal width of a convex polygon over all directions (rotating calipers).
double hull_width(std::span<const Point> hull);

/// Twice the signed shoelace area of a closed chain.
std::int64_t twice_signed_area(std::span<const Point> chain);

double point_segment_distance_sq(const Point2d& p, const Point2d& a, const Point2d& b);

}  // namespace polygonet
