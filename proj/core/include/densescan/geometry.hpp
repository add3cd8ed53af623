#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace densescan {

// Stride/size bookkeeping for dense scanning. All pixel quantities are
// level-0 pixels; map quantities are output-grid cells.
struct ScanGeometry {
  int patch_side = 0;    // L_i: classifier input side
  int net_stride = 0;    // S_f: output stride of one forward pass
  int dense_coeff = 0;   // alpha: offsets per axis
  int dense_stride = 0;  // S_d = S_f / alpha: stride of the stitched map
  int tile_side = 0;     // L_p = (L_in - L_i)/S_f + 1: output side of one forward pass
  int roi_stride = 0;    // S_r = S_d * alpha * L_p: spacing of ROI origins
  int infer_side = 0;    // L_in: side of the window fed to the net

  // Side of one dense tile in map cells (alpha interleaved forward outputs).
  int dense_tile_side() const { return dense_coeff * tile_side; }
  int half_patch() const { return patch_side / 2; }
};

// Derives all dependent fields. Throws DivisibilityError if net_stride is not
// divisible by dense_coeff, if (infer_side - patch_side) is not divisible by
// net_stride, or if patch_side is odd; RangeError if infer_side < patch_side
// or any input is not strictly positive.
ScanGeometry derive_geometry(int patch_side, int net_stride, int dense_coeff, int infer_side);

// The default desk-scale geometry: L_i=20, S_f=4, L_in=36.
ScanGeometry toy_geometry(int dense_coeff = 1);

struct Offset {
  int row = 0;  // i in [0, alpha)
  int col = 0;  // j in [0, alpha)
  int dy = 0;   // i * S_d
  int dx = 0;   // j * S_d

  bool operator==(const Offset&) const = default;
};

// All alpha^2 offsets in row-major order (row index outer).
std::vector<Offset> offsets(const ScanGeometry& g);

// Map-cell index -> level-0 coordinate of the patch center.
std::int64_t map_prob_to_slide(std::int64_t cell, const ScanGeometry& g);

// Level-0 coordinate -> nearest map-cell index (half rounds away from zero).
// Throws OutOfFrameError if coord < patch_side/2.
std::int64_t map_slide_to_prob(std::int64_t coord, const ScanGeometry& g);

// Number of map cells along an axis of the given level-0 extent
// (patch positions at stride S_d that fit entirely inside).
std::int64_t map_cells(std::int64_t extent, const ScanGeometry& g);

// JSON config block {patch_side, net_stride, dense_coeff, infer_side}.
// Derived fields are always recomputed, never read from disk.
ScanGeometry geometry_from_json(const std::string& text);
ScanGeometry load_geometry(const std::filesystem::path& path);
std::string geometry_to_json(const ScanGeometry& g);
void save_geometry(const ScanGeometry& g, const std::filesystem::path& path);

}  // namespace densescan
