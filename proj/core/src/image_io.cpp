#include "gw/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "gw/errors.hpp"

namespace gw::io {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void check_rgb(const Tensor& image, const char* op) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError(std::string(op) + ": expected [3,H,W], got " + shape_str(image.shape));
  }
}

}  // namespace

Tensor read_png(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw ImageIoError("cannot open " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, f.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw ImageIoError(path + " is not a PNG file");
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("libpng init failed");
  }
  std::vector<png_bytep> row_ptrs;
  std::vector<png_byte> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("failed to decode " + path);
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  png_set_strip_alpha(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  png_read_update_info(png, info);

  const int h = static_cast<int>(png_get_image_height(png, info));
  const int w = static_cast<int>(png_get_image_width(png, info));
  const std::size_t stride = png_get_rowbytes(png, info);
  pixels.resize(stride * static_cast<std::size_t>(h));
  row_ptrs.resize(static_cast<std::size_t>(h));
  for (int r = 0; r < h; ++r) row_ptrs[static_cast<std::size_t>(r)] = pixels.data() + stride * r;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor out({3, h, w}, std::vector<float>(static_cast<std::size_t>(3) * h * w));
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int r = 0; r < h; ++r) {
    const png_byte* row = pixels.data() + stride * r;
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        out.data[plane * ch + static_cast<std::size_t>(r) * w + c] =
            static_cast<float>(row[3 * c + ch]);
      }
    }
  }
  return out;
}

void write_png(const std::string& path, const Tensor& image) {
  check_rgb(image, "write_png");
  const int h = image.dim(1), w = image.dim(2);

  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw ImageIoError("cannot open " + path + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("libpng init failed");
  }
  std::vector<png_byte> rowbuf(static_cast<std::size_t>(w) * 3);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("failed to encode " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        const float v = image.data[plane * ch + static_cast<std::size_t>(r) * w + c];
        rowbuf[static_cast<std::size_t>(3 * c + ch)] =
            static_cast<png_byte>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
    png_write_row(png, rowbuf.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor resize_bilinear(const Tensor& image, int out_h, int out_w) {
  check_rgb(image, "resize_bilinear");
  if (out_h < 1 || out_w < 1) throw ValueError("resize_bilinear: output extents must be positive");
  const int h = image.dim(1), w = image.dim(2);
  if (h == out_h && w == out_w) return image;

  Tensor out({3, out_h, out_w}, std::vector<float>(static_cast<std::size_t>(3) * out_h * out_w));
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  const float sy = out_h > 1 ? static_cast<float>(h - 1) / (out_h - 1) : 0.0f;
  const float sx = out_w > 1 ? static_cast<float>(w - 1) / (out_w - 1) : 0.0f;
  for (int r = 0; r < out_h; ++r) {
    const float fy = r * sy;
    const int y0 = std::min(static_cast<int>(fy), h - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const float wy = fy - y0;
    for (int c = 0; c < out_w; ++c) {
      const float fx = c * sx;
      const int x0 = std::min(static_cast<int>(fx), w - 1);
      const int x1 = std::min(x0 + 1, w - 1);
      const float wx = fx - x0;
      for (int ch = 0; ch < 3; ++ch) {
        const float* p = image.data.data() + in_plane * ch;
        const float v =
            (1 - wy) * ((1 - wx) * p[static_cast<std::size_t>(y0) * w + x0] +
                        wx * p[static_cast<std::size_t>(y0) * w + x1]) +
            wy * ((1 - wx) * p[static_cast<std::size_t>(y1) * w + x0] +
                  wx * p[static_cast<std::size_t>(y1) * w + x1]);
        out.data[out_plane * ch + static_cast<std::size_t>(r) * out_w + c] = v;
      }
    }
  }
  return out;
}

Tensor to_unit_range(const Tensor& image255) {
  Tensor out = image255;
  for (auto& v : out.data) v = v / 127.5f - 1.0f;
  return out;
}

Tensor from_unit_range(const Tensor& unit) {
  Tensor out = unit;
  for (auto& v : out.data) v = (v + 1.0f) * 127.5f;
  return out;
}

Tensor load_normalized(const std::string& path, int height, int width) {
  return to_unit_range(resize_bilinear(read_png(path), height, width));
}

}  // namespace gw::io
