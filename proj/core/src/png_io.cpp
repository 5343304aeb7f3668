#include "bgm/png_io.hpp"

#include <png.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

namespace bgm {

namespace {

std::atomic<std::uint64_t> g_open_count{0};

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  note_file_open();
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

}  // namespace

std::uint64_t file_open_count() { return g_open_count.load(); }
void note_file_open() { g_open_count.fetch_add(1); }

Raster read_png(const std::filesystem::path& path) {
  FilePtr file = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError(path.string() + ": not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path.string() + ": corrupt PNG");
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * height);
  rows.resize(height);
  for (int y = 0; y < height; ++y) rows[y] = buffer.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const int out_channels = channels >= 3 ? 3 : 1;
  Raster out(out_channels, height, width);
  const double max_code = depth == 16 ? 65535.0 : 255.0;
  for (int y = 0; y < height; ++y) {
    const png_byte* row = rows[y];
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < out_channels; ++c) {
        const std::size_t idx = static_cast<std::size_t>(x) * channels + c;
        double code;
        if (depth == 16) {
          std::uint16_t v;
          std::memcpy(&v, row + idx * 2, 2);
          code = v;
        } else {
          code = row[idx];
        }
        out.at(c, y, x) = code / max_code;
      }
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Raster& raster, int bit_depth) {
  if (raster.channels != 1 && raster.channels != 3) throw ShapeError("write_png: need 1 or 3 channels");
  if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("write_png: bit depth must be 8 or 16");
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  const int bytes = bit_depth / 8;
  const std::size_t rowbytes = static_cast<std::size_t>(raster.width) * raster.channels * bytes;
  std::vector<png_byte> buffer(rowbytes * raster.height);
  const double max_code = bit_depth == 16 ? 65535.0 : 255.0;
  for (int y = 0; y < raster.height; ++y) {
    for (int x = 0; x < raster.width; ++x) {
      for (int c = 0; c < raster.channels; ++c) {
        const double v = std::clamp(raster.at(c, y, x), 0.0, 1.0);
        const auto code = static_cast<unsigned>(std::lround(v * max_code));
        png_byte* dst = buffer.data() + y * rowbytes + (static_cast<std::size_t>(x) * raster.channels + c) * bytes;
        if (bit_depth == 16) {
          dst[0] = static_cast<png_byte>(code >> 8);
          dst[1] = static_cast<png_byte>(code & 0xff);
        } else {
          dst[0] = static_cast<png_byte>(code);
        }
      }
    }
  }
  std::vector<png_bytep> rows(raster.height);
  for (int y = 0; y < raster.height; ++y) rows[y] = buffer.data() + rowbytes * y;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path.string() + ": PNG write failed");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, raster.width, raster.height, bit_depth,
               raster.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_image(const std::filesystem::path& path) {
  Raster r = read_png(path);
  if (r.channels == 1) {
    Raster rgb(3, r.height, r.width);
    for (int c = 0; c < 3; ++c) std::copy(r.data.begin(), r.data.end(), rgb.channel(c).begin());
    return Image(std::move(rgb));
  }
  return Image(std::move(r));
}

AlphaMatte read_alpha(const std::filesystem::path& path) {
  Raster r = read_png(path);
  if (r.channels != 1) {
    // Color mattes: take the first channel.
    Raster g(1, r.height, r.width);
    std::copy(r.channel(0).begin(), r.channel(0).end(), g.data.begin());
    return AlphaMatte(std::move(g));
  }
  return AlphaMatte(std::move(r));
}

}  // namespace bgm
