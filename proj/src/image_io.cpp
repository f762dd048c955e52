// SPDX-License-Identifier: Apache-2.0
#include "dhnet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <vector>

#include "dhnet/errors.hpp"

namespace dhnet {

namespace {

struct FileCloser {
  std::FILE* f = nullptr;
  ~FileCloser() {
    if (f != nullptr) std::fclose(f);
  }
};

}  // namespace

Tensor<double> read_png(const std::string& path) {
  FileCloser fc;
  fc.f = std::fopen(path.c_str(), "rb");
  if (fc.f == nullptr) throw IoError("cannot open " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, fc.f) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw IoError("not a PNG file: " + path);
  }

  png_structp pngp =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (pngp == nullptr) throw IoError("png reader allocation failed");
  png_infop infop = png_create_info_struct(pngp);
  if (infop == nullptr) {
    png_destroy_read_struct(&pngp, nullptr, nullptr);
    throw IoError("png info allocation failed");
  }
  std::vector<png_byte> data;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(pngp))) {
    png_destroy_read_struct(&pngp, &infop, nullptr);
    throw IoError("png decode failed: " + path);
  }
  png_init_io(pngp, fc.f);
  png_set_sig_bytes(pngp, 8);
  png_read_info(pngp, infop);

  const png_uint_32 w = png_get_image_width(pngp, infop);
  const png_uint_32 h = png_get_image_height(pngp, infop);
  const int color = png_get_color_type(pngp, infop);
  const int depth = png_get_bit_depth(pngp, infop);

  if (depth == 16) png_set_strip_16(pngp);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(pngp);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(pngp);
  if (png_get_valid(pngp, infop, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(pngp);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(pngp);
  }
  png_set_strip_alpha(pngp);
  png_read_update_info(pngp, infop);

  const std::size_t stride = png_get_rowbytes(pngp, infop);
  data.resize(stride * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = data.data() + y * stride;
  png_read_image(pngp, rows.data());
  png_read_end(pngp, nullptr);
  png_destroy_read_struct(&pngp, &infop, nullptr);

  Tensor<double> out(Shape{1, 3, static_cast<std::int64_t>(h),
                           static_cast<std::int64_t>(w)});
  for (std::int64_t y = 0; y < static_cast<std::int64_t>(h); ++y) {
    const png_byte* row = data.data() + static_cast<std::size_t>(y) * stride;
    for (std::int64_t x = 0; x < static_cast<std::int64_t>(w); ++x) {
      for (std::int64_t c = 0; c < 3; ++c) {
        out.at(0, c, y, x) = static_cast<double>(row[3 * x + c]) / 255.0;
      }
    }
  }
  return out;
}

void write_png(const std::string& path, const Tensor<double>& img) {
  if (img.shape.n != 1 || img.shape.c != 3) {
    throw ConfigError("write_png expects a (1,3,H,W) tensor");
  }
  const std::int64_t h = img.shape.h;
  const std::int64_t w = img.shape.w;

  std::vector<png_byte> data(static_cast<std::size_t>(3 * h * w));
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      for (std::int64_t c = 0; c < 3; ++c) {
        const double v = std::clamp(img.at(0, c, y, x), 0.0, 1.0);
        data[static_cast<std::size_t>(3 * (y * w + x) + c)] =
            static_cast<png_byte>(std::lround(v * 255.0));
      }
    }
  }

  const std::string tmp = path + ".tmp";
  {
    FileCloser fc;
    fc.f = std::fopen(tmp.c_str(), "wb");
    if (fc.f == nullptr) throw IoError("cannot create " + tmp);

    png_structp pngp = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                               nullptr, nullptr);
    if (pngp == nullptr) throw IoError("png writer allocation failed");
    png_infop infop = png_create_info_struct(pngp);
    if (infop == nullptr) {
      png_destroy_write_struct(&pngp, nullptr);
      throw IoError("png info allocation failed");
    }
    if (setjmp(png_jmpbuf(pngp))) {
      png_destroy_write_struct(&pngp, &infop);
      throw IoError("png encode failed: " + path);
    }
    png_init_io(pngp, fc.f);
    png_set_IHDR(pngp, infop, static_cast<png_uint_32>(w),
                 static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(pngp, infop);
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (std::int64_t y = 0; y < h; ++y) {
      rows[static_cast<std::size_t>(y)] =
          data.data() + static_cast<std::size_t>(3 * y * w);
    }
    png_write_image(pngp, rows.data());
    png_write_end(pngp, nullptr);
    png_destroy_write_struct(&pngp, &infop);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw IoError("cannot rename " + tmp + " to " + path);
  }
}

}  // namespace dhnet
