#pragma once

#include <filesystem>

#include "densescan/image.hpp"

namespace densescan {

// 8-bit PNG read/write. Reads convert palette/gray/alpha to the requested
// layout; writes use a fast compression level (tiles are bulk data).
ImageRGB read_png_rgb(const std::filesystem::path& path);
ImageGray read_png_gray(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageRGB& img);
void write_png(const std::filesystem::path& path, const ImageGray& img);

}  // namespace densescan
