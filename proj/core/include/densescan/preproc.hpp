#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "densescan/slide.hpp"

namespace densescan {

using Histogram256 = std::array<std::uint64_t, 256>;

// Threshold t in [0,255] maximizing between-class variance for the split
// {gray < t} vs {gray >= t}; ties break toward the smallest t. Throws
// DegenerateHistogramError when all mass sits in a single bin.
int otsu_threshold(const Histogram256& histogram);

// Low-resolution binary tissue map. One cell covers a 2^level square of
// level-0 pixels.
struct TissueMask {
  int level = 0;
  int height = 0;
  int width = 0;
  bool degenerate = false;  // whole level was a single gray value
  std::vector<std::uint8_t> tissue;  // 0/1 row-major

  bool at(int y, int x) const { return tissue[static_cast<std::size_t>(y) * width + x] != 0; }
};

// OTSU-masks the slide at mask_level (clamped to the top level). A pixel is
// tissue iff its luma is strictly below the threshold; a uniform level yields
// an empty mask with the degenerate flag set.
TissueMask tissue_mask(const SlidePyramid& slide, int mask_level = 5);

// Conservative level-0 hit test over the mask: true iff the level-0 square
// [y, y+side) x [x, x+side) touches any tissue cell.
class RoiMaskPredicate {
 public:
  RoiMaskPredicate() = default;  // empty predicate: everything is tissue
  explicit RoiMaskPredicate(const TissueMask& mask);

  bool operator()(std::int64_t y, std::int64_t x, std::int64_t side) const;

 private:
  bool all_ = true;
  int level_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> tissue_;
};

RoiMaskPredicate map_mask_to_level0(const TissueMask& mask);

// PNG (0/255) plus JSON sidecar {mask_level} next to it.
void save_mask(const TissueMask& mask, const std::filesystem::path& png_path);
TissueMask load_mask(const std::filesystem::path& png_path);

}  // namespace densescan
