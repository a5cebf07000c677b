#include "polygonet/error.hpp"
#include "polygonet/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace polygonet {

namespace {

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

struct MemorySource {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t offset;
};

struct PngErrorState {
  char message[256] = {0};
};

void png_read_from_memory(png_structp png, png_bytep out, png_size_t count) {
  auto* src = static_cast<MemorySource*>(png_get_io_ptr(png));
  if (src->offset + count > src->size) {
    png_error(png, "unexpected end of data");
  }
  std::memcpy(out, src->data + src->offset, count);
  src->offset += count;
}

void png_on_error(png_structp png, png_const_charp msg) {
  auto* state = static_cast<PngErrorState*>(png_get_error_ptr(png));
  std::snprintf(state->message, sizeof(state->message), "%s", msg);
  png_longjmp(png, 1);
}

void png_on_warning(png_structp, png_const_charp) {}

// Keeps all libpng state in POD locals so the longjmp path never skips a destructor.
bool decode_png_raw(MemorySource& src, PngErrorState& err, int& width, int& height, int& channels,
                    std::vector<std::uint8_t>& out, std::size_t& failed_offset) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_on_error, png_on_warning);
  if (png == nullptr) {
    std::snprintf(err.message, sizeof(err.message), "cannot allocate png reader");
    return false;
  }
  png_infop info = png_create_info_struct(png);
  png_bytep* rows = nullptr;
  if (setjmp(png_jmpbuf(png))) {
    failed_offset = src.offset;
    delete[] rows;
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, &src, png_read_from_memory);
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (depth == 16) png_set_scale_16(png);
  png_set_strip_alpha(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_error(png, "unexpected channel count after transforms");
  }
  const std::size_t stride = png_get_rowbytes(png, info);
  out.resize(stride * static_cast<std::size_t>(height));
  rows = new png_bytep[static_cast<std::size_t>(height)];
  for (int y = 0; y < height; ++y) rows[y] = out.data() + stride * static_cast<std::size_t>(y);
  png_read_image(png, rows);
  png_read_end(png, nullptr);
  delete[] rows;
  rows = nullptr;
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  MemorySource src{bytes.data(), bytes.size(), 0};
  PngErrorState err;
  Image img;
  std::size_t failed_offset = 0;
  if (!decode_png_raw(src, err, img.width, img.height, img.channels, img.pixels, failed_offset)) {
    throw Error(ErrorCode::Decode, "png decode failed at byte " + std::to_string(failed_offset) +
                                       ": " + err.message);
  }
  return img;
}

class PnmParser {
 public:
  explicit PnmParser(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  Image parse() {
    const char kind = static_cast<char>(bytes_[1]);
    pos_ = 2;
    Image img;
    img.channels = kind == '5' ? 1 : 3;
    img.width = read_int("width");
    img.height = read_int("height");
    const int maxval = read_int("maxval");
    if (img.width < 1 || img.height < 1) fail("non-positive dimensions");
    if (maxval < 1 || maxval > 65535) fail("maxval out of range");
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("missing separator after header");
    ++pos_;

    const std::size_t samples = static_cast<std::size_t>(img.width) * img.height * img.channels;
    const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
    if (bytes_.size() - pos_ < samples * sample_bytes) fail("truncated pixel data");

    img.pixels.resize(samples);
    for (std::size_t i = 0; i < samples; ++i) {
      unsigned v = bytes_[pos_ + i * sample_bytes];
      if (sample_bytes == 2) v = (v << 8) | bytes_[pos_ + i * 2 + 1];
      if (maxval != 255) v = (v * 255u + static_cast<unsigned>(maxval) / 2) / static_cast<unsigned>(maxval);
      img.pixels[i] = static_cast<std::uint8_t>(std::min(v, 255u));
    }
    return img;
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw Error(ErrorCode::Decode, "pnm decode failed at byte " + std::to_string(pos_) + ": " + why);
  }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  int read_int(const char* field) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) fail(std::string("expected ") + field);
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > (1L << 30)) fail(std::string(field) + " too large");
      ++pos_;
    }
    return static_cast<int>(v);
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void png_write_to_vector(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

void png_flush_noop(png_structp) {}

bool encode_png_raw(const Image& img, std::vector<std::uint8_t>& out, PngErrorState& err) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_on_error, png_on_warning);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
  for (int y = 0; y < img.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + stride * static_cast<std::size_t>(y)));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace

Image decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 8 && std::equal(std::begin(kPngSignature), std::end(kPngSignature), bytes.begin())) {
    return decode_png(bytes);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) {
    return PnmParser(bytes).parse();
  }
  throw Error(ErrorCode::UnsupportedFormat, "unsupported image format (expected PNG, P5 or P6)");
}

Image read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_image(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  std::vector<std::uint8_t> out;
  PngErrorState err;
  if (!encode_png_raw(img, out, err)) {
    throw Error(ErrorCode::Io, std::string("png encode failed: ") + err.message);
  }
  return out;
}

std::vector<std::uint8_t> encode_pnm(const Image& img) {
  const std::string header = (img.channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

}  // namespace polygonet
