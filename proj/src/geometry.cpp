#include "polygonet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace polygonet {

PointList convex_hull(std::span<const Point> points) {
  PointList pts(points.begin(), points.end());
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    return a.x() != b.x() ? a.x() < b.x() : a.y() < b.y();
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() <= 2) return pts;

  PointList hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

bool hull_width_at_most(std::span<const Point> hull, double nu) {
  const std::size_t h = hull.size();
  if (h <= 2) return true;
  const double nu2 = nu * nu;
  for (std::size_t i = 0; i < h; ++i) {
    const Point& a = hull[i];
    const Point& b = hull[(i + 1) % h];
    std::int64_t far = 0;
    for (const auto& v : hull) far = std::max(far, std::abs(cross(a, b, v)));
    const double far_d = static_cast<double>(far);
    if (far_d * far_d <= nu2 * static_cast<double>(squared_distance(a, b))) return true;
  }
  return false;
}

double hull_width(std::span<const Point> hull) {
  const std::size_t h = hull.size();
  if (h <= 2) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  std::size_t j = 1;
  for (std::size_t i = 0; i < h; ++i) {
    const Point& a = hull[i];
    const Point& b = hull[(i + 1) % h];
    while (std::abs(cross(a, b, hull[(j + 1) % h])) > std::abs(cross(a, b, hull[j]))) j = (j + 1) % h;
    best = std::min(best, static_cast<double>(std::abs(cross(a, b, hull[j]))) /
                              std::sqrt(static_cast<double>(squared_distance(a, b))));
  }
  return best;
}

std::int64_t twice_signed_area(std::span<const Point> chain) {
  std::int64_t acc = 0;
  const std::size_t n = chain.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& p = chain[i];
    const Point& q = chain[(i + 1) % n];
    acc += static_cast<std::int64_t>(p.x()) * q.y() - static_cast<std::int64_t>(q.x()) * p.y();
  }
  return acc;
}

double point_segment_distance_sq(const Point2d& p, const Point2d& a, const Point2d& b) {
  const Point2d ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).squaredNorm();
  const Point2d ap = p - a;
  const double dot = ap.dot(ab);
  if (dot <= 0.0) return ap.squaredNorm();
  if (dot >= len2) return (p - b).squaredNorm();
  // Perpendicular form keeps collinear integer points at exactly zero.
  const double cr = ab.x() * ap.y() - ab.y() * ap.x();
  return cr * cr / len2;
}

}  // namespace polygonet
