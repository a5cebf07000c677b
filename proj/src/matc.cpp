#include "polygonet/matc.hpp"
#include "polygonet/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace polygonet {

namespace {

std::size_t wrap(std::size_t i, std::size_t n) { return i % n; }

// Grows [start, ...] point by point while the hull stays within nu. Returns
// the inclusive unrolled end index; never exceeds `limit` (exclusive).
std::size_t grow_segment(const Contour& c, std::size_t start, std::size_t end, std::size_t limit, double nu) {
  const std::size_t n = c.size();
  PointList range;
  range.reserve(end - start + 1);
  for (std::size_t i = start; i <= end; ++i) range.push_back(c[wrap(i, n)]);
  PointList hull = convex_hull(range);
  while (end + 1 < limit) {
    PointList candidate = hull;
    candidate.push_back(c[wrap(end + 1, n)]);
    PointList grown = convex_hull(candidate);
    if (!hull_width_at_most(grown, nu)) break;
    hull = std::move(grown);
    ++end;
  }
  return end;
}

std::size_t range_limit(const Contour& c, std::size_t start) {
  return c.closed ? start + c.size() : c.size();
}

// Keeps the ranges [s, ends[s]] not contained in any other range.
std::vector<MaximalBlurredSegment> keep_maximal(const Contour& c, const std::vector<std::size_t>& ends,
                                                const std::vector<double>& widths) {
  const std::size_t n = c.size();
  std::vector<MaximalBlurredSegment> out;
  for (std::size_t s = 0; s < n; ++s) {
    if (ends[s] - s + 1 >= n) {
      return {MaximalBlurredSegment{0, n - 1, widths[s]}};
    }
  }
  if (!c.closed) {
    std::size_t best = 0;
    for (std::size_t s = 0; s < n; ++s) {
      if (s == 0 || ends[s] > best) out.push_back({s, ends[s], widths[s]});
      best = std::max(best, ends[s]);
    }
    return out;
  }
  // Closed: a later start s' contains [s, e] iff ends[s'] - n >= e.
  std::vector<std::ptrdiff_t> suffix(n + 1, std::numeric_limits<std::ptrdiff_t>::min());
  for (std::size_t s = n; s-- > 0;) {
    suffix[s] = std::max(suffix[s + 1], static_cast<std::ptrdiff_t>(ends[s]) - static_cast<std::ptrdiff_t>(n));
  }
  std::ptrdiff_t prefix = std::numeric_limits<std::ptrdiff_t>::min();
  for (std::size_t s = 0; s < n; ++s) {
    const auto e = static_cast<std::ptrdiff_t>(ends[s]);
    if (e > prefix && e > suffix[s + 1]) out.push_back({s, wrap(ends[s], n), widths[s]});
    prefix = std::max(prefix, e);
  }
  return out;
}

double edge_cost(const Contour& c, std::size_t from, std::size_t to) {
  // Sum of squared distances of contour points in [from, to) (modular) to the chord.
  const std::size_t n = c.size();
  const Point2d a = c[from].cast<double>();
  const Point2d b = c[to].cast<double>();
  double acc = 0.0;
  const std::size_t span = (to + n - from) % n;
  const std::size_t count = span == 0 ? n : span;
  for (std::size_t k = 0; k < count; ++k) {
    acc += point_segment_distance_sq(c[wrap(from + k, n)].cast<double>(), a, b);
  }
  return acc;
}

// Cost of every edge of `p`; edge j joins vertex j to vertex j+1.
std::vector<double> edge_costs(const Contour& c, const std::vector<std::size_t>& v) {
  const std::size_t m = v.size();
  std::vector<double> costs;
  if (c.closed) {
    for (std::size_t j = 0; j < m; ++j) costs.push_back(edge_cost(c, v[j], v[(j + 1) % m]));
  } else {
    for (std::size_t j = 0; j + 1 < m; ++j) costs.push_back(edge_cost(c, v[j], v[j + 1]));
  }
  return costs;
}

// Open chains: points outside [first vertex, last vertex] go to the nearest end edge.
double open_tail_cost(const Contour& c, const std::vector<std::size_t>& v) {
  double acc = 0.0;
  const Point2d first = c[v.front()].cast<double>();
  const Point2d second = c[v[1]].cast<double>();
  for (std::size_t i = 0; i < v.front(); ++i) {
    acc += point_segment_distance_sq(c[i].cast<double>(), first, second);
  }
  const Point2d last = c[v.back()].cast<double>();
  const Point2d before = c[v[v.size() - 2]].cast<double>();
  for (std::size_t i = v.back(); i < c.size(); ++i) {
    acc += point_segment_distance_sq(c[i].cast<double>(), before, last);
  }
  return acc;
}

}  // namespace

bool range_within_width(const Contour& c, std::size_t start, std::size_t length, double nu) {
  PointList pts;
  for (std::size_t k = 0; k < length; ++k) pts.push_back(c[wrap(start + k, c.size())]);
  return hull_width_at_most(convex_hull(pts), nu);
}

std::vector<MaximalBlurredSegment> recognize_mbs(const Contour& c, double nu) {
  const std::size_t n = c.size();
  if (n == 0) return {};
  if (n == 1) return {MaximalBlurredSegment{0, 0, nu}};
  // Width is monotone under inclusion, so ends never move backwards.
  std::vector<std::size_t> ends(n);
  std::size_t end = 0;
  for (std::size_t s = 0; s < n; ++s) {
    end = grow_segment(c, s, std::max(end, s), range_limit(c, s), nu);
    ends[s] = end;
  }
  return keep_maximal(c, ends, std::vector<double>(n, nu));
}

std::vector<std::size_t> longest_segment_through(const Contour& c, double nu) {
  const std::size_t n = c.size();
  std::vector<std::size_t> best(n, n > 0 ? 1 : 0);
  for (const auto& seg : recognize_mbs(c, nu)) {
    const std::size_t len = seg.length(n);
    for (std::size_t k = 0; k < len; ++k) {
      auto& b = best[wrap(seg.start + k, n)];
      b = std::max(b, len);
    }
  }
  return best;
}

std::vector<double> meaningful_thickness_profile(const Contour& c, const std::vector<double>& ladder,
                                                 double growth_threshold) {
  const std::size_t n = c.size();
  if (ladder.empty()) throw Error(ErrorCode::Precondition, "meaningful thickness: empty ladder");
  if (n <= 2 || ladder.size() == 1) return std::vector<double>(n, ladder.front());

  std::vector<std::vector<std::size_t>> lengths;
  lengths.reserve(ladder.size());
  for (double nu : ladder) lengths.push_back(longest_segment_through(c, nu));

  std::vector<double> out(n, ladder.back());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k + 1 < ladder.size(); ++k) {
      const double ratio = static_cast<double>(lengths[k + 1][i]) / static_cast<double>(lengths[k][i]);
      if (ratio < growth_threshold) {
        out[i] = ladder[k];
        break;
      }
    }
  }
  return out;
}

double meaningful_thickness(const Contour& c, std::size_t i, const std::vector<double>& ladder,
                            double growth_threshold) {
  return meaningful_thickness_profile(c, ladder, growth_threshold).at(i);
}

TangentialCover adaptive_tangential_cover(const Contour& c, const std::vector<double>& per_index_nu,
                                          int max_iterations) {
  const std::size_t n = c.size();
  if (per_index_nu.size() != n) {
    throw Error(ErrorCode::Precondition, "adaptive cover: thickness profile length differs from contour length");
  }
  TangentialCover cover;
  if (n == 0) return cover;
  if (n == 1) {
    cover.segments.push_back({0, 0, per_index_nu[0]});
    return cover;
  }

  const bool uniform = std::all_of(per_index_nu.begin(), per_index_nu.end(),
                                   [&](double v) { return v == per_index_nu.front(); });
  if (uniform) {
    cover.segments = recognize_mbs(c, per_index_nu.front());
    return cover;
  }

  std::vector<std::size_t> ends(n);
  std::vector<double> widths(n);
  for (std::size_t s = 0; s < n; ++s) {
    double nu = per_index_nu[s];
    std::size_t end = grow_segment(c, s, s, range_limit(c, s), nu);
    for (int it = 0; it < max_iterations; ++it) {
      double spanned = nu;
      for (std::size_t i = s; i <= end; ++i) spanned = std::max(spanned, per_index_nu[wrap(i, n)]);
      if (spanned <= nu) break;
      nu = spanned;
      end = grow_segment(c, s, end, range_limit(c, s), nu);
    }
    ends[s] = end;
    widths[s] = nu;
  }
  cover.segments = keep_maximal(c, ends, widths);
  return cover;
}

double pseudo_curvature(const Point& a, const Point& p, const Point& b) {
  const Point u = a - p;
  const Point v = b - p;
  if (u.isZero() || v.isZero()) return M_PI;
  const double cr = static_cast<double>(u.x()) * v.y() - static_cast<double>(u.y()) * v.x();
  const double dt = static_cast<double>(u.x()) * v.x() + static_cast<double>(u.y()) * v.y();
  return std::atan2(std::abs(cr), dt);
}

std::vector<DominantPoint> detect_dominant_points(const Contour& c, const TangentialCover& cover) {
  const std::size_t n = c.size();
  const auto& segs = cover.segments;
  const std::size_t m = segs.size();
  if (c.closed && m == 1) {
    throw Error(ErrorCode::DegenerateCover, "tangential cover has a single segment; the shape has no corners");
  }
  std::vector<DominantPoint> out;
  const std::size_t pairs = c.closed ? m : (m == 0 ? 0 : m - 1);
  for (std::size_t k = 0; k < pairs; ++k) {
    const auto& left = segs[k];
    const auto& right = segs[(k + 1) % m];
    if (!left.contains(right.start, n)) continue;
    const std::size_t zone = (left.end + n - right.start) % n + 1;
    const Point& a = c[left.start];
    const Point& b = c[right.end];
    DominantPoint best{right.start, std::numeric_limits<double>::infinity()};
    for (std::size_t off = 0; off < zone; ++off) {
      const std::size_t idx = wrap(right.start + off, n);
      const double angle = pseudo_curvature(a, c[idx], b);
      if (angle < best.angle || (angle == best.angle && idx < best.index)) best = {idx, angle};
    }
    out.push_back(best);
  }
  std::sort(out.begin(), out.end(), [](const DominantPoint& x, const DominantPoint& y) {
    return x.index != y.index ? x.index < y.index : x.angle < y.angle;
  });
  out.erase(std::unique(out.begin(), out.end(),
                        [](const DominantPoint& x, const DominantPoint& y) { return x.index == y.index; }),
            out.end());
  return out;
}

Polygon make_polygon(const Contour& c, std::vector<std::size_t> indices) {
  Polygon p;
  p.vertex_indices = std::move(indices);
  for (std::size_t i : p.vertex_indices) p.points.push_back(c[i]);
  return p;
}

PolygonQuality polygon_quality(const Contour& c, const Polygon& p) {
  if (p.size() < 2) throw Error(ErrorCode::DegeneratePolygon, "polygon quality needs at least 2 vertices");
  PolygonQuality q;
  const auto costs = edge_costs(c, p.vertex_indices);
  q.isse = std::accumulate(costs.begin(), costs.end(), 0.0);
  if (!c.closed) q.isse += open_tail_cost(c, p.vertex_indices);
  q.cr = static_cast<double>(c.size()) / static_cast<double>(p.size());
  return q;
}

Polygon simplify_polygon(const Contour& c, const std::vector<DominantPoint>& dominant, double min_separation) {
  std::vector<DominantPoint> dp = dominant;
  if (!c.closed && c.size() > 0) {
    const auto has = [&](std::size_t i) {
      return std::any_of(dp.begin(), dp.end(), [&](const DominantPoint& d) { return d.index == i; });
    };
    if (!has(0)) dp.push_back({0, M_PI});
    if (!has(c.size() - 1)) dp.push_back({c.size() - 1, M_PI});
    std::sort(dp.begin(), dp.end(), [](const auto& x, const auto& y) { return x.index < y.index; });
  }

  std::vector<std::size_t> kept;
  const double min_sq = min_separation * min_separation;
  for (std::size_t k = 0; k < dp.size(); ++k) {
    const bool forced_end = !c.closed && k + 1 == dp.size();
    if (!kept.empty() && !forced_end) {
      const auto d2 = static_cast<double>(squared_distance(c[dp[k].index], c[kept.back()]));
      if (d2 < min_sq) continue;
    }
    kept.push_back(dp[k].index);
  }

  if (c.closed && kept.size() < 3 && c.size() >= 3) {
    std::vector<DominantPoint> ranked = dp;
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& x, const auto& y) { return x.angle < y.angle; });
    kept.clear();
    for (std::size_t k = 0; k < ranked.size() && kept.size() < 3; ++k) kept.push_back(ranked[k].index);
    // Too few candidates: spread the remainder evenly along the chain.
    for (std::size_t k = 0; kept.size() < 3 && k < 3; ++k) {
      const std::size_t idx = k * c.size() / 3;
      if (std::find(kept.begin(), kept.end(), idx) == kept.end()) kept.push_back(idx);
    }
    std::sort(kept.begin(), kept.end());
  }
  return make_polygon(c, std::move(kept));
}

Polygon optimize_polygon(const Contour& c, const Polygon& p, std::vector<PolygonQuality>* trace) {
  if (p.size() < 4) return p;
  std::vector<std::size_t> v = p.vertex_indices;
  const auto n = static_cast<double>(c.size());
  auto fom = [](double cr, double isse) { return cr / std::max(isse, 1.0); };

  PolygonQuality q = polygon_quality(c, make_polygon(c, v));
  if (trace) trace->push_back(q);
  while (v.size() > 3) {
    const std::size_t m = v.size();
    // Removing vertex j merges the edges on either side of it.
    double best_delta = std::numeric_limits<double>::infinity();
    std::size_t best_j = m;
    const std::size_t first = c.closed ? 0 : 1;
    const std::size_t last = c.closed ? m : m - 1;
    for (std::size_t j = first; j < last; ++j) {
      const std::size_t prev = v[(j + m - 1) % m];
      const std::size_t next = v[(j + 1) % m];
      const double delta = edge_cost(c, prev, next) - edge_cost(c, prev, v[j]) - edge_cost(c, v[j], next);
      if (delta < best_delta || (delta == best_delta && v[j] < v[best_j])) {
        best_delta = delta;
        best_j = j;
      }
    }
    if (best_j == m) break;
    const double isse = q.isse + best_delta;
    const double cr = n / static_cast<double>(m - 1);
    if (!(fom(cr, isse) > fom(q.cr, q.isse))) break;
    v.erase(v.begin() + static_cast<std::ptrdiff_t>(best_j));
    q = polygon_quality(c, make_polygon(c, v));
    if (trace) trace->push_back(q);
  }
  return make_polygon(c, std::move(v));
}

Polygon dominant_points_from_contour(const Contour& c, const MatcParams& params) {
  std::vector<double> nu;
  if (params.nu_mode == NuMode::Fixed) {
    nu.assign(c.size(), params.fixed_nu);
  } else {
    nu = meaningful_thickness_profile(c, params.thickness_ladder, params.growth_threshold);
  }
  const TangentialCover cover = adaptive_tangential_cover(c, nu, params.cover_iterations);
  const auto dominant = detect_dominant_points(c, cover);
  const Polygon simplified = simplify_polygon(c, dominant, params.min_separation);
  return optimize_polygon(c, simplified);
}

BinaryImage foreground_mask(const Image& img, const MatcParams& params) {
  const GrayImage gray = to_grayscale(img);
  ThresholdResult th;
  try {
    th = otsu_threshold(gray, params.polarity);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateImage) throw;
    throw Error(ErrorCode::NoObject, std::string("no object: ") + e.what());
  }
  const int radius = params.denoise_radius >= 0 ? params.denoise_radius : default_denoise_radius(img.width, img.height);
  return denoise(th.mask, radius);
}

Contour main_contour(const BinaryImage& mask, const MatcParams& params) {
  std::vector<Contour> contours = trace_contours(mask);
  std::erase_if(contours, [&](const Contour& c) { return c.size() < params.min_contour_points; });
  return select_main_contour(contours);
}

Contour extract_main_contour(const Image& img, const MatcParams& params) {
  return main_contour(foreground_mask(img, params), params);
}

Polygon extract_dominant_points(const Image& img, const MatcParams& params) {
  return dominant_points_from_contour(extract_main_contour(img, params), params);
}

}  // namespace polygonet
