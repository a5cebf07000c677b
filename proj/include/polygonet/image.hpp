#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace polygonet {

/// Decoded 8-bit image, row-major, channels interleaved.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;  // 1 or 3
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int x, int y, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
};

/// One byte per pixel, value 0 or 1 (1 = object).
struct BinaryImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> mask;

  BinaryImage() = default;
  BinaryImage(int w, int h) : width(w), height(h), mask(static_cast<std::size_t>(w) * h, 0) {}

  bool at(int x, int y) const { return mask[static_cast<std::size_t>(y) * width + x] != 0; }
  bool inside(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  void set(int x, int y, bool v) { mask[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const;

  friend bool operator==(const BinaryImage&, const BinaryImage&) = default;
};

/// Auto takes the minority side as foreground (ties to the dark side).
enum class Polarity { Auto, ForegroundDark, ForegroundLight };

/// "auto", "dark", "light".
const char* to_string(Polarity p) noexcept;
Polarity parse_polarity(const std::string& name);

struct ThresholdResult {
  int threshold = 0;  // pixels <= threshold form the dark class
  bool foreground_dark = false;
  BinaryImage mask;
};

/// Decodes PNG (8/16-bit, any color type) or binary PGM (P5) / PPM (P6).
Image decode_image(std::span<const std::uint8_t> bytes);
Image read_image(const std::filesystem::path& path);

/// Writes 8-bit PNG; used by tooling and tests.
std::vector<std::uint8_t> encode_png(const Image& img);
std::vector<std::uint8_t> encode_pnm(const Image& img);

/// BT.601 luma, rounded half away from zero.
GrayImage to_grayscale(const Image& img);

std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept;

/// Otsu's threshold on a 256-bin histogram; ties resolve to the smallest t.
/// Throws DegenerateImage when the histogram has a single occupied bin.
int otsu_level(std::span<const std::uint64_t, 256> histogram);

ThresholdResult otsu_threshold(const GrayImage& img, Polarity polarity = Polarity::Auto);

BinaryImage erode(const BinaryImage& mask, int radius);
BinaryImage dilate(const BinaryImage& mask, int radius);

/// Opening then closing with a (2r+1)x(2r+1) square.
BinaryImage denoise(const BinaryImage& mask, int radius);

/// 1 for small images, otherwise round(max(W,H)/512) with a floor of 1.
int default_denoise_radius(int width, int height) noexcept;

}  // namespace polygonet
