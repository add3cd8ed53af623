#include "densescan/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "densescan/errors.hpp"

namespace densescan {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void read_png(const std::filesystem::path& path, bool gray, int* out_w, int* out_h,
              std::vector<std::uint8_t>* out_pixels) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }

  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("failed to decode PNG " + path.string());
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  int color_type = png_get_color_type(png, info);

  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (gray) {
    if (color_type == PNG_COLOR_TYPE_RGB || color_type == PNG_COLOR_TYPE_RGB_ALPHA ||
        color_type == PNG_COLOR_TYPE_PALETTE) {
      png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
  } else {
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
      png_set_gray_to_rgb(png);
    }
  }
  png_read_update_info(png, info);

  const std::size_t stride = png_get_rowbytes(png, info);
  const std::size_t bpp = gray ? 1 : 3;
  if (stride != bpp * w) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("unexpected PNG row layout in " + path.string());
  }

  out_pixels->assign(stride * h, 0);
  row_ptrs.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) row_ptrs[y] = out_pixels->data() + y * stride;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  *out_w = static_cast<int>(w);
  *out_h = static_cast<int>(h);
}

void write_png_impl(const std::filesystem::path& path, int w, int h, bool gray,
                    const std::uint8_t* pixels) {
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed to encode PNG " + path.string());
  }

  png_init_io(png, fp.get());
  png_set_compression_level(png, 1);  // tiles are bulk data; favor speed
  png_set_IHDR(png, info, w, h, 8, gray ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const std::size_t stride = static_cast<std::size_t>(w) * (gray ? 1 : 3);
  for (int y = 0; y < h; ++y) {
    png_write_row(png, const_cast<png_bytep>(pixels + y * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

ImageRGB read_png_rgb(const std::filesystem::path& path) {
  ImageRGB img;
  read_png(path, false, &img.width, &img.height, &img.pixels);
  return img;
}

ImageGray read_png_gray(const std::filesystem::path& path) {
  ImageGray img;
  read_png(path, true, &img.width, &img.height, &img.pixels);
  return img;
}

void write_png(const std::filesystem::path& path, const ImageRGB& img) {
  write_png_impl(path, img.width, img.height, false, img.pixels.data());
}

void write_png(const std::filesystem::path& path, const ImageGray& img) {
  write_png_impl(path, img.width, img.height, true, img.pixels.data());
}

}  // namespace densescan
