#include "privshield/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace privshield {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Tensor read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  check(fp != nullptr, "cannot open PNG file: " + path);

  png_byte header[8];
  check(std::fread(header, 1, 8, fp.get()) == 8 && !png_sig_cmp(header, 0, 8),
        "not a PNG file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           nullptr, nullptr);
  check(png != nullptr, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("png_create_info_struct failed");
  }
  std::vector<png_bytep> row_ptrs;
  std::vector<png_byte> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("PNG decode error in " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);

  // Normalize to 8-bit gray or RGB.
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (depth == 16) png_set_strip_16(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("unsupported PNG channel count " + std::to_string(channels) +
                " in " + path);
  }
  pixels.resize(static_cast<std::size_t>(w) * h * channels);
  row_ptrs.resize(h);
  for (png_uint_32 y = 0; y < h; ++y)
    row_ptrs[y] = pixels.data() + static_cast<std::size_t>(y) * w * channels;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor out({channels, static_cast<int>(h), static_cast<int>(w)});
  for (int c = 0; c < channels; ++c)
    for (png_uint_32 y = 0; y < h; ++y)
      for (png_uint_32 x = 0; x < w; ++x)
        out.at({c, static_cast<int>(y), static_cast<int>(x)}) =
            pixels[(static_cast<std::size_t>(y) * w + x) * channels + c] /
            real(255);
  return out;
}

void write_png(const std::string& path, const Tensor& image) {
  check(image.rank() == 3, "write_png: image must be [C,H,W], got " +
                               image.shape_str());
  const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  check(c == 1 || c == 3, "write_png: channels must be 1 or 3");

  std::vector<png_byte> pixels(static_cast<std::size_t>(h) * w * c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        real v = image.at({ch, y, x});
        v = std::min(std::max(v, real(0)), real(1));
        pixels[(static_cast<std::size_t>(y) * w + x) * c + ch] =
            static_cast<png_byte>(std::lround(v * 255));
      }

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  check(fp != nullptr, "cannot create PNG file: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  check(png != nullptr, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("PNG encode error for " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, 8,
               c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y)
    rows[y] = pixels.data() + static_cast<std::size_t>(y) * w * c;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor tile_grid(const Tensor& images, int rows, int cols) {
  check(images.rank() == 4, "tile_grid: images must be [N,C,H,W]");
  const int n = images.dim(0), c = images.dim(1), h = images.dim(2),
            w = images.dim(3);
  check(rows > 0 && cols > 0 && rows * cols >= n, "tile_grid: grid too small");
  const int gh = rows * h + (rows - 1), gw = cols * w + (cols - 1);
  Tensor grid({c, gh, gw});
  grid.fill(real(1));
  for (int i = 0; i < n; ++i) {
    const int r = i / cols, col = i % cols;
    const int oy = r * (h + 1), ox = col * (w + 1);
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          grid.at({ch, oy + y, ox + x}) = images.at({i, ch, y, x});
  }
  return grid;
}

}  // namespace privshield
