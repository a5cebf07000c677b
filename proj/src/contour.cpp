#include "polygonet/contour.hpp"
#include "polygonet/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <sstream>

namespace polygonet {

namespace {

// Screen-space 8-neighbourhood, counterclockwise as seen with y pointing down.
constexpr std::array<std::array<int, 2>, 8> kDirs{{
    {1, 0}, {1, -1}, {0, -1}, {-1, -1}, {-1, 0}, {-1, 1}, {0, 1}, {1, 1},
}};

int direction_between(const Point& from, const Point& to) {
  const int dx = to.x() - from.x();
  const int dy = to.y() - from.y();
  for (int d = 0; d < 8; ++d) {
    if (kDirs[d][0] == dx && kDirs[d][1] == dy) return d;
  }
  return -1;
}

bool foreground(const BinaryImage& mask, int x, int y) { return mask.inside(x, y) && mask.at(x, y); }

Contour trace_outer_border(const BinaryImage& mask, const Point& start) {
  Contour c;
  c.closed = true;

  auto neighbour = [](const Point& p, int d) { return Point(p.x() + kDirs[d][0], p.y() + kDirs[d][1]); };

  // The west neighbour of the start pixel is background; sweep clockwise from it.
  Point first_next = start;
  bool found = false;
  for (int step = 0; step < 8 && !found; ++step) {
    const int d = (4 - step + 8) % 8;
    const Point q = neighbour(start, d);
    if (foreground(mask, q.x(), q.y())) {
      first_next = q;
      found = true;
    }
  }
  if (!found) {
    c.points.push_back(start);
    return c;
  }

  Point prev = first_next;
  Point cur = start;
  while (true) {
    const int back = direction_between(cur, prev);
    Point next = prev;
    for (int step = 1; step <= 8; ++step) {
      const Point q = neighbour(cur, (back + step) % 8);
      if (foreground(mask, q.x(), q.y())) {
        next = q;
        break;
      }
    }
    c.points.push_back(cur);
    if (next == start && cur == first_next) break;
    prev = cur;
    cur = next;
  }
  return c;
}

std::size_t wrap(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  return static_cast<std::size_t>(((i % m) + m) % m);
}

Contour approximate_simple(const Contour& c) {
  const std::size_t n = c.size();
  Contour out;
  out.closed = c.closed;
  for (std::size_t i = 0; i < n; ++i) {
    const bool endpoint = i == 0 || (!c.closed && i + 1 == n);
    if (endpoint) {
      out.points.push_back(c[i]);
      continue;
    }
    const Point in_step = c[i] - c[i - 1];
    const Point out_step = c[wrap(static_cast<std::ptrdiff_t>(i) + 1, n)] - c[i];
    if (in_step != out_step) out.points.push_back(c[i]);
  }
  return out;
}

struct SupportInfo {
  int k = 0;
  double significance = 0.0;
};

// Teh-Chin dominant point detection with L1 or k-cosine significance.
Contour approximate_tc89(const Contour& c, bool kcos, const Tc89Params& params) {
  const std::size_t n = c.size();
  const auto sn = static_cast<std::ptrdiff_t>(n);
  auto at = [&](std::ptrdiff_t i) -> const Point& { return c.points[wrap(i, n)]; };

  // Pass 0: only points where the chain code turns are candidates.
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    const bool endpoint = i == 0 || (!c.closed && i + 1 == n);
    if (endpoint) {
      candidates.push_back(i);
      continue;
    }
    const auto si = static_cast<std::ptrdiff_t>(i);
    if ((at(si) - at(si - 1)) != (at(si + 1) - at(si))) candidates.push_back(i);
  }

  // Pass 1: region of support and significance per candidate.
  std::vector<SupportInfo> info(n);
  for (std::size_t i : candidates) {
    const auto si = static_cast<std::ptrdiff_t>(i);
    std::ptrdiff_t kmax = c.closed ? (sn - 1) / 2 : std::min(si, sn - 1 - si);
    if (params.max_support > 0) kmax = std::min<std::ptrdiff_t>(kmax, params.max_support);
    if (kmax < 1) {
      info[i] = {0, 0.0};
      continue;
    }
    auto chord = [&](std::ptrdiff_t k) {
      return squared_distance(at(si - k), at(si + k));
    };
    auto deviation = [&](std::ptrdiff_t k) { return cross(at(si - k), at(si + k), at(si)); };

    std::ptrdiff_t k = 1;
    for (; k < kmax; ++k) {
      const std::int64_t l0 = chord(k);
      const std::int64_t l1 = chord(k + 1);
      const std::int64_t d0 = deviation(k);
      const std::int64_t d1 = deviation(k + 1);
      if (l0 >= l1) break;
      // d/l comparisons cross-multiplied; chord lengths are positive here.
      const long double lhs = static_cast<long double>(d0) * l1;
      const long double rhs = static_cast<long double>(d1) * l0;
      if (d0 > 0 && lhs >= rhs) break;
      if (d0 < 0 && lhs <= rhs) break;
    }

    double s = 0.0;
    if (kcos) {
      const Point a = at(si - k) - at(si);
      const Point b = at(si + k) - at(si);
      const double na = std::hypot(a.x(), a.y());
      const double nb = std::hypot(b.x(), b.y());
      s = (na == 0.0 || nb == 0.0) ? -1.0 : (a.x() * double(b.x()) + a.y() * double(b.y())) / (na * nb);
    } else {
      for (std::ptrdiff_t j = 1; j <= k; ++j) {
        const Point m2 = at(si - j) + at(si + j) - 2 * at(si);
        s += 0.5 * (std::abs(m2.x()) + std::abs(m2.y()));
      }
      s /= static_cast<double>(k);
    }
    info[i] = {static_cast<int>(k), s};
  }

  // Pass 2: non-maximum suppression over chain neighbours inside the support window.
  std::vector<char> is_candidate(n, 0);
  for (std::size_t i : candidates) is_candidate[i] = 1;
  std::vector<char> keep(n, 0);
  for (std::size_t i : candidates) {
    const auto si = static_cast<std::ptrdiff_t>(i);
    const std::ptrdiff_t window = std::max<std::ptrdiff_t>(1, info[i].k / std::max(1, params.nms_divisor));
    bool suppressed = false;
    for (std::ptrdiff_t off = -window; off <= window && !suppressed; ++off) {
      if (off == 0) continue;
      std::ptrdiff_t j = si + off;
      if (!c.closed && (j < 0 || j >= sn)) continue;
      const std::size_t uj = wrap(j, n);
      if (uj == i || !is_candidate[uj]) continue;
      if (info[uj].significance > info[i].significance) suppressed = true;
    }
    keep[i] = suppressed ? 0 : 1;
  }

  // Pass 3: among adjacent survivors with equal significance keep the earlier one.
  for (std::size_t i = 1; i < n; ++i) {
    if (keep[i] && keep[i - 1] && info[i].significance == info[i - 1].significance) keep[i] = 0;
  }

  Contour out;
  out.closed = c.closed;
  for (std::size_t i = 0; i < n; ++i) {
    const bool endpoint = i == 0 || (!c.closed && i + 1 == n);
    if (keep[i] || endpoint) out.points.push_back(c[i]);
  }
  return out;
}

}  // namespace

std::string_view to_string(ApproxMode mode) noexcept {
  switch (mode) {
    case ApproxMode::None: return "none";
    case ApproxMode::Simple: return "simple";
    case ApproxMode::Tc89L1: return "tc89l1";
    case ApproxMode::Tc89Kcos: return "tc89kcos";
  }
  return "none";
}

ApproxMode parse_approx_mode(std::string_view name) {
  if (name == "none") return ApproxMode::None;
  if (name == "simple") return ApproxMode::Simple;
  if (name == "tc89l1") return ApproxMode::Tc89L1;
  if (name == "tc89kcos") return ApproxMode::Tc89Kcos;
  throw Error(ErrorCode::Config, "unknown approximation mode '" + std::string(name) + "'");
}

std::vector<Contour> trace_contours(const BinaryImage& mask) {
  std::vector<Contour> out;
  std::vector<char> labelled(mask.mask.size(), 0);
  std::deque<Point> queue;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * mask.width + x;
      if (!mask.mask[idx] || labelled[idx]) continue;

      out.push_back(trace_outer_border(mask, Point(x, y)));

      labelled[idx] = 1;
      queue.emplace_back(x, y);
      while (!queue.empty()) {
        const Point p = queue.front();
        queue.pop_front();
        for (const auto& d : kDirs) {
          const int qx = p.x() + d[0];
          const int qy = p.y() + d[1];
          if (!foreground(mask, qx, qy)) continue;
          const std::size_t qi = static_cast<std::size_t>(qy) * mask.width + qx;
          if (labelled[qi]) continue;
          labelled[qi] = 1;
          queue.emplace_back(qx, qy);
        }
      }
    }
  }
  return out;
}

Contour approximate(const Contour& c, ApproxMode mode, const Tc89Params& params) {
  if (mode == ApproxMode::None || c.size() < 3) return c;
  switch (mode) {
    case ApproxMode::Simple: return approximate_simple(c);
    case ApproxMode::Tc89L1: return approximate_tc89(c, false, params);
    case ApproxMode::Tc89Kcos: return approximate_tc89(c, true, params);
    case ApproxMode::None: break;
  }
  return c;
}

const Contour& select_main_contour(const std::vector<Contour>& contours) {
  if (contours.empty()) throw Error(ErrorCode::NoObject, "no contour found: the mask has no object");
  std::size_t best = 0;
  std::int64_t best_area = -1;
  for (std::size_t i = 0; i < contours.size(); ++i) {
    const std::int64_t area = std::abs(twice_signed_area(contours[i].points));
    if (area > best_area || (area == best_area && contours[i].size() > contours[best].size())) {
      best = i;
      best_area = area;
    }
  }
  return contours[best];
}

std::string contours_to_svg(const std::vector<Contour>& contours, int width, int height) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  for (const auto& c : contours) {
    os << "  <" << (c.closed ? "polygon" : "polyline") << " fill=\"none\" stroke=\"black\" stroke-width=\"0.5\" points=\"";
    for (std::size_t i = 0; i < c.size(); ++i) {
      os << (i ? " " : "") << c[i].x() + 0.5 << ',' << c[i].y() + 0.5;
    }
    os << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string overlay_svg(const Contour& contour, const PointList& polygon, int width, int height) {
  std::ostringstream os;
  auto points = [&](const PointList& pts) {
    for (std::size_t i = 0; i < pts.size(); ++i) os << (i ? " " : "") << pts[i].x() + 0.5 << ',' << pts[i].y() + 0.5;
  };
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  os << "  <polygon fill=\"none\" stroke=\"gray\" stroke-width=\"0.4\" points=\"";
  points(contour.points);
  os << "\"/>\n  <polygon fill=\"none\" stroke=\"red\" stroke-width=\"0.6\" points=\"";
  points(polygon);
  os << "\"/>\n";
  for (const auto& p : polygon)
    os << "  <circle fill=\"red\" r=\"0.6\" cx=\"" << p.x() + 0.5 << "\" cy=\"" << p.y() + 0.5 << "\"/>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace polygonet
