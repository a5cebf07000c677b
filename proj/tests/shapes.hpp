#pragma once

#include "polygonet/contour.hpp"
#include "polygonet/image.hpp"

#include <random>

namespace shapes {

using namespace polygonet;

inline BinaryImage square_mask(int side, int margin) {
  BinaryImage m(side + 2 * margin, side + 2 * margin);
  for (int y = margin; y < margin + side; ++y)
    for (int x = margin; x < margin + side; ++x) m.set(x, y, true);
  return m;
}

inline BinaryImage disk_mask(int radius, int margin) {
  const int size = 2 * (radius + margin) + 1;
  const int c = radius + margin;
  BinaryImage m(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      if ((x - c) * (x - c) + (y - c) * (y - c) <= radius * radius) m.set(x, y, true);
  return m;
}

/// Boundary chain of a filled side x side square whose top-left pixel is (1, 1).
inline Contour square_chain(int side) { return trace_contours(square_mask(side, 1)).at(0); }

inline Contour disk_chain(int radius) { return trace_contours(disk_mask(radius, 2)).at(0); }

inline Image to_image(const BinaryImage& m, std::uint8_t fg = 255, std::uint8_t bg = 0) {
  Image img{m.width, m.height, 1, std::vector<std::uint8_t>(m.mask.size())};
  for (std::size_t i = 0; i < m.mask.size(); ++i) img.pixels[i] = m.mask[i] ? fg : bg;
  return img;
}

/// Random closed contour: the main outer border of a smoothed random blob.
inline Contour random_closed_contour(std::mt19937& rng, int size, std::size_t max_points) {
  while (true) {
    BinaryImage m(size, size);
    std::uniform_int_distribution<int> pos(2, size - 3);
    std::uniform_int_distribution<int> rad(1, std::max(2, size / 5));
    std::uniform_int_distribution<int> count(1, 6);
    const int blobs = count(rng);
    for (int b = 0; b < blobs; ++b) {
      const int cx = pos(rng), cy = pos(rng), r = rad(rng);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
          if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.set(x, y, true);
    }
    std::bernoulli_distribution flip(0.03);
    for (auto& v : m.mask)
      if (flip(rng)) v = 1 - v;
    const auto cs = trace_contours(m);
    if (cs.empty()) continue;
    const Contour& c = select_main_contour(cs);
    if (c.size() >= 4 && c.size() <= max_points) return c;
  }
}

}  // namespace shapes
