#include "polygonet/synth.hpp"
#include "polygonet/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace polygonet {

namespace {

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

std::uint8_t clamp_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

// Leaf-local outline radius at polar angle theta; apex on +x, base on -x.
double outline(const LeafShape& s, double theta) {
  const double a = 1.0, b = s.aspect;
  const double c = std::cos(theta), sn = std::sin(theta);
  double r = a * b / std::sqrt((b * c) * (b * c) + (a * sn) * (a * sn));
  r *= 1.0 + s.tip * std::pow(std::max(0.0, c), 6.0);
  if (s.lobes > 0) r *= 1.0 - s.lobe_depth * 0.5 * (1.0 - std::cos(s.lobes * theta));
  if (s.teeth > 0) {
    const double u = theta / (2.0 * M_PI) * s.teeth;
    r *= 1.0 - s.tooth_depth * (u - std::floor(u));
  }
  return r;
}

}  // namespace

LeafShape leaf_class(int label) {
  Rng rng(0x1eafULL * 7919ULL + static_cast<std::uint64_t>(label) * 104729ULL);
  LeafShape s;
  s.aspect = uniform(rng, 0.25, 0.6);
  static constexpr int kLobes[] = {0, 0, 0, 3, 5, 7};
  s.lobes = kLobes[static_cast<std::size_t>(uniform01(rng) * 6)];
  s.lobe_depth = s.lobes ? uniform(rng, 0.08, 0.25) : 0.0;
  s.teeth = uniform01(rng) < 0.35 ? 0 : static_cast<int>(uniform(rng, 12, 40));
  s.tooth_depth = s.teeth ? uniform(rng, 0.02, 0.06) : 0.0;
  s.tip = uniform(rng, 0.0, 0.5);
  return s;
}

Image synthetic_leaf(const LeafShape& base, Rng& rng, int width, int height) {
  LeafShape s = base;
  s.aspect *= uniform(rng, 0.9, 1.1);
  if (s.teeth > 0) s.teeth = std::max(6, s.teeth + static_cast<int>(uniform(rng, -2.0, 3.0)));

  const double length = uniform(rng, 0.26, 0.34) * std::min(width, height);
  const double angle = uniform(rng, -M_PI, M_PI);
  const double cx = width / 2.0 + uniform(rng, -0.05, 0.05) * width;
  const double cy = height / 2.0 + uniform(rng, -0.05, 0.05) * height;
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double stalk = 0.25 * length, stalk_half_width = 0.012 * length;

  const double bg = uniform(rng, 225, 245);
  const double leaf_r = uniform(rng, 35, 70), leaf_g = uniform(rng, 100, 145), leaf_b = uniform(rng, 25, 55);

  Image img{width, height, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height * 3)};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double dx = x - cx, dy = y - cy;
      // Leaf-local coordinates in units of the half-length.
      const double u = (ca * dx + sa * dy) / length;
      const double v = (-sa * dx + ca * dy) / length;
      const double rho = std::hypot(u, v);
      bool inside = rho <= outline(s, std::atan2(v, u));
      const bool petiole = u < 0.0 && u > -(1.0 + stalk / length) && std::abs(v) * length < stalk_half_width;
      inside = inside || petiole;
      const std::size_t px = (static_cast<std::size_t>(y) * width + x) * 3;
      const double shade = 1.0 - 0.04 * (static_cast<double>(y) / height);
      if (inside) {
        const double vein = std::abs(v) * length < 0.006 * length ? 18.0 : 0.0;
        const double n = uniform(rng, -12, 12);
        img.pixels[px + 0] = clamp_byte(leaf_r + n + vein);
        img.pixels[px + 1] = clamp_byte(leaf_g + n + vein);
        img.pixels[px + 2] = clamp_byte(leaf_b + n + vein);
      } else {
        const double n = uniform(rng, -8, 8);
        img.pixels[px + 0] = clamp_byte(bg * shade + n);
        img.pixels[px + 1] = clamp_byte(bg * shade + n);
        img.pixels[px + 2] = clamp_byte((bg - 6) * shade + n);
      }
    }
  }
  return img;
}

std::size_t write_leaf_dataset(const std::filesystem::path& root, int classes, int per_class, std::uint64_t seed,
                               int width, int height) {
  namespace fs = std::filesystem;
  Rng rng(seed);
  std::size_t written = 0;
  for (int k = 0; k < classes; ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "class_%02d", k);
    const fs::path dir = root / name;
    fs::create_directories(dir);
    const LeafShape shape = leaf_class(k);
    for (int i = 0; i < per_class; ++i) {
      const auto png = encode_png(synthetic_leaf(shape, rng, width, height));
      char file[32];
      std::snprintf(file, sizeof file, "leaf_%03d.png", i);
      std::ofstream out(dir / file, std::ios::binary);
      if (!out.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size())))
        throw Error(ErrorCode::Io, "cannot write " + (dir / file).string());
      ++written;
    }
  }
  return written;
}

}  // namespace polygonet
