#pragma once

// Dominant points via an adaptive tangential cover of maximal blurred segments.
//
// Index ranges on closed contours are modular: a segment [start, end] with
// end < start wraps through index 0. `length` counts points in the range.

#include "polygonet/contour.hpp"
#include "polygonet/image.hpp"

#include <vector>

namespace polygonet {

struct MaximalBlurredSegment {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  double width = 0.0;   // nu

  std::size_t length(std::size_t n) const { return (end + n - start) % n + 1; }
  bool contains(std::size_t i, std::size_t n) const { return (i + n - start) % n < length(n); }

  friend bool operator==(const MaximalBlurredSegment&, const MaximalBlurredSegment&) = default;
};

struct TangentialCover {
  std::vector<MaximalBlurredSegment> segments;  // sorted by start
};

struct DominantPoint {
  std::size_t index = 0;
  double angle = 0.0;  // pseudo-curvature in radians; smaller is sharper
};

struct Polygon {
  std::vector<std::size_t> vertex_indices;
  PointList points;

  std::size_t size() const { return vertex_indices.size(); }
};

struct PolygonQuality {
  double isse = 0.0;
  double cr = 1.0;
};

enum class NuMode { Fixed, Adaptive };

struct MatcParams {
  NuMode nu_mode = NuMode::Adaptive;
  double fixed_nu = 1.4;
  std::vector<double> thickness_ladder{1.0, 1.5, 2.0, 2.5, 3.0};
  double growth_threshold = 1.2;
  int cover_iterations = 3;
  double min_separation = 2.0;
  /// Contours shorter than this are treated as specks and ignored.
  std::size_t min_contour_points = 8;
  /// Negative selects default_denoise_radius().
  int denoise_radius = -1;
  Polarity polarity = Polarity::Auto;
};

/// Point sets of the ranges are checked against `nu` with the exact hull width.
bool range_within_width(const Contour& c, std::size_t start, std::size_t length, double nu);

std::vector<MaximalBlurredSegment> recognize_mbs(const Contour& c, double nu);

/// Length of the longest maximal blurred segment through each index, at width nu.
std::vector<std::size_t> longest_segment_through(const Contour& c, double nu);

double meaningful_thickness(const Contour& c, std::size_t i, const std::vector<double>& ladder,
                            double growth_threshold = 1.2);

/// meaningful_thickness for every index, sharing the per-width segment scans.
std::vector<double> meaningful_thickness_profile(const Contour& c, const std::vector<double>& ladder,
                                                 double growth_threshold = 1.2);

TangentialCover adaptive_tangential_cover(const Contour& c, const std::vector<double>& per_index_nu,
                                          int max_iterations = 3);

/// Angle at p subtended by a and b, in [0, pi].
double pseudo_curvature(const Point& a, const Point& p, const Point& b);

std::vector<DominantPoint> detect_dominant_points(const Contour& c, const TangentialCover& cover);

PolygonQuality polygon_quality(const Contour& c, const Polygon& p);

Polygon make_polygon(const Contour& c, std::vector<std::size_t> indices);

Polygon simplify_polygon(const Contour& c, const std::vector<DominantPoint>& dominant, double min_separation);

/// Greedy removal of the cheapest vertex while CR / max(ISSE, 1) strictly
/// improves. `trace`, when given, receives the quality after every step
/// (starting with the input polygon).
Polygon optimize_polygon(const Contour& c, const Polygon& p, std::vector<PolygonQuality>* trace = nullptr);

/// Everything after tracing: thickness estimation, cover, detection,
/// simplification and optimisation.
Polygon dominant_points_from_contour(const Contour& c, const MatcParams& params);

/// Grayscale, Otsu, denoise. A constant image throws NoObject.
BinaryImage foreground_mask(const Image& img, const MatcParams& params);

/// Trace, drop specks, pick the main contour.
Contour main_contour(const BinaryImage& mask, const MatcParams& params);

Contour extract_main_contour(const Image& img, const MatcParams& params);

Polygon extract_dominant_points(const Image& img, const MatcParams& params);

}  // namespace polygonet
