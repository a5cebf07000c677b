#include "polygonet/error.hpp"
#include "polygonet/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace polygonet {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Decode: return "decode";
    case ErrorCode::UnsupportedFormat: return "unsupported-format";
    case ErrorCode::DegenerateImage: return "degenerate-image";
    case ErrorCode::NoObject: return "no-object";
    case ErrorCode::DegenerateCover: return "degenerate-cover";
    case ErrorCode::DegeneratePolygon: return "degenerate-polygon";
    case ErrorCode::SequenceTooLong: return "sequence-too-long";
    case ErrorCode::EmptySequence: return "empty-sequence";
    case ErrorCode::MagicMismatch: return "magic-mismatch";
    case ErrorCode::Truncated: return "truncated";
    case ErrorCode::CountMismatch: return "count-mismatch";
    case ErrorCode::EmptyDataset: return "empty-dataset";
    case ErrorCode::DatasetQuality: return "dataset-quality";
    case ErrorCode::Config: return "config";
    case ErrorCode::Checkpoint: return "checkpoint";
    case ErrorCode::Io: return "io";
    case ErrorCode::Precondition: return "precondition";
  }
  return "unknown";
}

std::size_t BinaryImage::count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept {
  // Integer form of 0.299/0.587/0.114; all terms are non-negative so +500 rounds half away from zero.
  const unsigned weighted = 299u * r + 587u * g + 114u * b;
  return static_cast<std::uint8_t>(std::min(255u, (weighted + 500u) / 1000u));
}

GrayImage to_grayscale(const Image& img) {
  GrayImage out{img.width, img.height, {}};
  if (img.channels == 1) {
    out.pixels = img.pixels;
    return out;
  }
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  out.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* p = img.pixels.data() + i * 3;
    out.pixels[i] = luma(p[0], p[1], p[2]);
  }
  return out;
}

int otsu_level(std::span<const std::uint64_t, 256> histogram) {
  std::int64_t total_n = 0;
  std::int64_t total_sum = 0;
  for (int v = 0; v < 256; ++v) {
    total_n += static_cast<std::int64_t>(histogram[v]);
    total_sum += static_cast<std::int64_t>(histogram[v]) * v;
  }

  // sigma_B^2 * n^2 = (n1*S0 - n0*S1)^2 / (n0*n1); the n^2 factor is common to all t.
  std::int64_t n0 = 0;
  std::int64_t s0 = 0;
  long double best = -1.0L;
  int best_t = -1;
  for (int t = 0; t < 255; ++t) {
    n0 += static_cast<std::int64_t>(histogram[t]);
    s0 += static_cast<std::int64_t>(histogram[t]) * t;
    const std::int64_t n1 = total_n - n0;
    if (n0 == 0 || n1 == 0) continue;
    const std::int64_t s1 = total_sum - s0;
    const long double diff = static_cast<long double>(n1) * s0 - static_cast<long double>(n0) * s1;
    const long double score = diff * diff / (static_cast<long double>(n0) * static_cast<long double>(n1));
    if (score > best) {
      best = score;
      best_t = t;
    }
  }
  if (best_t < 0) {
    throw Error(ErrorCode::DegenerateImage, "otsu: image has a single intensity; no threshold separates it");
  }
  return best_t;
}

const char* to_string(Polarity p) noexcept {
  switch (p) {
    case Polarity::Auto: return "auto";
    case Polarity::ForegroundDark: return "dark";
    case Polarity::ForegroundLight: return "light";
  }
  return "?";
}

Polarity parse_polarity(const std::string& name) {
  if (name == "auto") return Polarity::Auto;
  if (name == "dark") return Polarity::ForegroundDark;
  if (name == "light") return Polarity::ForegroundLight;
  throw Error(ErrorCode::Config, "polarity must be auto, dark or light, got '" + name + "'");
}

ThresholdResult otsu_threshold(const GrayImage& img, Polarity polarity) {
  std::array<std::uint64_t, 256> hist{};
  for (auto v : img.pixels) ++hist[v];
  ThresholdResult r;
  r.threshold = otsu_level(hist);

  std::uint64_t dark = 0;
  for (int v = 0; v <= r.threshold; ++v) dark += hist[v];
  const std::uint64_t light = img.pixels.size() - dark;
  switch (polarity) {
    case Polarity::ForegroundDark: r.foreground_dark = true; break;
    case Polarity::ForegroundLight: r.foreground_dark = false; break;
    case Polarity::Auto: r.foreground_dark = dark <= light; break;
  }

  r.mask = BinaryImage(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const bool is_dark = img.pixels[i] <= r.threshold;
    r.mask.mask[i] = is_dark == r.foreground_dark ? 1 : 0;
  }
  return r;
}

namespace {

// Separable square min/max filter. Pixels outside the image take `border`.
BinaryImage square_filter(const BinaryImage& in, int radius, bool take_max, std::uint8_t border) {
  if (radius <= 0) return in;
  const int w = in.width;
  const int h = in.height;
  BinaryImage tmp(w, h);
  BinaryImage out(w, h);
  auto combine = [take_max](std::uint8_t a, std::uint8_t b) {
    return take_max ? std::max(a, b) : std::min(a, b);
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint8_t acc = take_max ? 0 : 1;
      for (int dx = -radius; dx <= radius; ++dx) {
        const int xx = x + dx;
        acc = combine(acc, (xx < 0 || xx >= w) ? border : in.mask[static_cast<std::size_t>(y) * w + xx]);
      }
      tmp.mask[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint8_t acc = take_max ? 0 : 1;
      for (int dy = -radius; dy <= radius; ++dy) {
        const int yy = y + dy;
        acc = combine(acc, (yy < 0 || yy >= h) ? border : tmp.mask[static_cast<std::size_t>(yy) * w + x]);
      }
      out.mask[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

}  // namespace

// Borders never erode or grow the object: erosion sees foreground outside, dilation background.
BinaryImage erode(const BinaryImage& mask, int radius) { return square_filter(mask, radius, false, 1); }

BinaryImage dilate(const BinaryImage& mask, int radius) { return square_filter(mask, radius, true, 0); }

BinaryImage denoise(const BinaryImage& mask, int radius) {
  if (radius <= 0) return mask;
  const BinaryImage opened = dilate(erode(mask, radius), radius);
  return erode(dilate(opened, radius), radius);
}

int default_denoise_radius(int width, int height) noexcept {
  const int m = std::max(width, height);
  if (m <= 64) return 1;
  return std::max(1, static_cast<int>(std::lround(m / 512.0)));
}

}  // namespace polygonet
