#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "densescan/geometry.hpp"
#include "densescan/pipeline.hpp"
#include "densescan/preproc.hpp"
#include "densescan/scorer.hpp"
#include "densescan/slide.hpp"

namespace densescan {

// One strided forward pass at a pixel offset (i*S_d, j*S_d).
struct OffsetTile {
  Offset offset;
  int side = 0;  // L_p
  std::vector<float> p;

  float at(int y, int x) const { return p[static_cast<std::size_t>(y) * side + x]; }
};

// alpha^2 offset tiles interleaved to stride S_d; side alpha*L_p.
struct DenseTile {
  std::int64_t roi_row = 0;
  std::int64_t roi_col = 0;
  int side = 0;
  std::vector<float> p;

  float at(int y, int x) const { return p[static_cast<std::size_t>(y) * side + x]; }
};

// Whole-slide probability grid at stride S_d; cell (h,w) scores the patch
// whose level-0 top-left is (h*S_d, w*S_d) (center h*S_d + L_i/2). Cells of
// ROIs skipped as background stay 0 with covered=false.
struct ProbabilityMap {
  std::int64_t height = 0;
  std::int64_t width = 0;
  ScanGeometry geometry;
  std::string slide_id;
  std::vector<float> p;
  std::vector<std::uint8_t> covered;

  float at(std::int64_t y, std::int64_t x) const { return p[y * width + x]; }
  bool is_covered(std::int64_t y, std::int64_t x) const { return covered[y * width + x] != 0; }
};

// Pure index shuffle per the mod/floor interleave; preserves the multiset of
// values. Throws ArityError unless exactly alpha^2 tiles, one per (i,j);
// ShapeError on mixed tile sides.
DenseTile interleave(const std::vector<OffsetTile>& opts, const ScanGeometry& g);

// Runs the net once per offset on the L_in window at roi origin + offset
// (white-padded at slide edges) and interleaves the results. The origin must
// lie on the S_r grid.
DenseTile scan_roi(const SlidePyramid& slide, std::int64_t roi_y, std::int64_t roi_x,
                   const ScanGeometry& g, const ConvNet& net);

// Places non-overlapping dense tiles into the whole-slide map; absent ROIs
// stay uncovered. Throws DuplicateTileError on a repeated ROI index.
ProbabilityMap stitch(const std::vector<DenseTile>& tiles, std::int64_t slide_height,
                      std::int64_t slide_width, const ScanGeometry& g,
                      const std::string& slide_id);

using MaskFn = std::function<bool(std::int64_t y, std::int64_t x, std::int64_t side)>;

struct ScanReport {
  std::int64_t rois_total = 0;
  std::int64_t rois_scanned = 0;
  std::int64_t rois_skipped = 0;
  std::uint64_t conv_macs = 0;
  PipelineStats pipeline;
};

// Full dense scan: enumerates ROI origins on the S_r grid covering every
// patch position, skips ROIs whose level-0 footprint misses the tissue mask,
// and runs scan_roi under the producer pipeline. The output is bit-identical
// for any producer count.
ProbabilityMap scan_slide(const SlidePyramid& slide, const ScanGeometry& g, const ConvNet& net,
                          const MaskFn& mask = {}, const PipelineConfig& pipeline = {},
                          ScanReport* report = nullptr);

// {slide}.pmap: magic "DSPMv1\n", uint32 LE header length, JSON header
// {height, width, dense_stride, patch_side, slide_id, ...geometry}, float32 LE
// row-major grid, then the coverage bitmap (row-major, LSB first).
void save_pmap(const ProbabilityMap& map, const std::filesystem::path& path);
ProbabilityMap load_pmap(const std::filesystem::path& path);

}  // namespace densescan
