#pragma once

#include "polygonet/geometry.hpp"
#include "polygonet/image.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace polygonet {

/// Ordered chain of pixel centres. Traced contours are closed and every
/// consecutive pair (including last -> first) is 8-adjacent.
struct Contour {
  PointList points;
  bool closed = true;

  std::size_t size() const { return points.size(); }
  const Point& operator[](std::size_t i) const { return points[i]; }

  friend bool operator==(const Contour&, const Contour&) = default;
};

enum class ApproxMode { None, Simple, Tc89L1, Tc89Kcos };

std::string_view to_string(ApproxMode mode) noexcept;
ApproxMode parse_approx_mode(std::string_view name);

/// Teh-Chin tuning. Region of support for point i is the smallest k at which
/// the chord stops growing or the relative deviation d/l stops growing; the
/// search is capped so p[i-k] and p[i+k] stay distinct.
struct Tc89Params {
  /// Non-maximum suppression looks at chain neighbours within k_i / nms_divisor.
  int nms_divisor = 2;
  /// Hard cap on k; 0 means floor((n - 1) / 2).
  int max_support = 0;
};

/// Outer borders of 8-connected components, counterclockwise on screen
/// (y down), each starting at its component's topmost-then-leftmost pixel.
/// Components are reported in raster order of that start pixel.
std::vector<Contour> trace_contours(const BinaryImage& mask);

Contour approximate(const Contour& c, ApproxMode mode, const Tc89Params& params = {});

/// Largest |shoelace area|, then most points, then earliest.
const Contour& select_main_contour(const std::vector<Contour>& contours);

/// One polyline per contour; viewBox is the image extent.
std::string contours_to_svg(const std::vector<Contour>& contours, int width, int height);

/// Contour in gray under a closed red polygon with vertex markers.
std::string overlay_svg(const Contour& contour, const PointList& polygon, int width, int height);

}  // namespace polygonet
