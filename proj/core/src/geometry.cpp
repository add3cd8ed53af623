#include "densescan/geometry.hpp"

#include <cmath>
#include <fstream>

#include "densescan/errors.hpp"
#include "json.hpp"

namespace densescan {

ScanGeometry derive_geometry(int patch_side, int net_stride, int dense_coeff, int infer_side) {
  if (patch_side <= 0 || net_stride <= 0 || dense_coeff <= 0 || infer_side <= 0) {
    throw RangeError("geometry inputs must be strictly positive");
  }
  if (infer_side < patch_side) {
    throw RangeError("infer_side " + std::to_string(infer_side) + " < patch_side " +
                     std::to_string(patch_side));
  }
  if (patch_side % 2 != 0) {
    throw DivisibilityError("patch_side must be even, got " + std::to_string(patch_side));
  }
  if (net_stride % dense_coeff != 0) {
    throw DivisibilityError("net_stride " + std::to_string(net_stride) +
                            " not divisible by dense_coeff " + std::to_string(dense_coeff));
  }
  if ((infer_side - patch_side) % net_stride != 0) {
    throw DivisibilityError("(infer_side - patch_side) = " +
                            std::to_string(infer_side - patch_side) + " not divisible by net_stride " +
                            std::to_string(net_stride));
  }

  ScanGeometry g;
  g.patch_side = patch_side;
  g.net_stride = net_stride;
  g.dense_coeff = dense_coeff;
  g.infer_side = infer_side;
  g.dense_stride = net_stride / dense_coeff;
  g.tile_side = (infer_side - patch_side) / net_stride + 1;
  // Non-overlap constraint: consecutive ROIs must advance by one dense tile,
  // i.e. alpha*L_p cells of stride S_d, which is S_f * L_p pixels.
  g.roi_stride = g.dense_stride * g.dense_coeff * g.tile_side;
  return g;
}

ScanGeometry toy_geometry(int dense_coeff) {
  return derive_geometry(20, 4, dense_coeff, 36);
}

std::vector<Offset> offsets(const ScanGeometry& g) {
  std::vector<Offset> out;
  out.reserve(static_cast<std::size_t>(g.dense_coeff) * g.dense_coeff);
  for (int i = 0; i < g.dense_coeff; ++i) {
    for (int j = 0; j < g.dense_coeff; ++j) {
      out.push_back({i, j, i * g.dense_stride, j * g.dense_stride});
    }
  }
  return out;
}

std::int64_t map_prob_to_slide(std::int64_t cell, const ScanGeometry& g) {
  return cell * g.dense_stride + g.patch_side / 2;
}

std::int64_t map_slide_to_prob(std::int64_t coord, const ScanGeometry& g) {
  const std::int64_t anchor = g.patch_side / 2;
  if (coord < anchor) {
    throw OutOfFrameError("coordinate " + std::to_string(coord) + " precedes map anchor " +
                          std::to_string(anchor));
  }
  return std::llround(static_cast<double>(coord - anchor) / g.dense_stride);
}

std::int64_t map_cells(std::int64_t extent, const ScanGeometry& g) {
  if (extent < g.patch_side) return 0;
  return (extent - g.patch_side) / g.dense_stride + 1;
}

ScanGeometry geometry_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad geometry JSON: ") + e.what());
  }
  for (const char* key : {"patch_side", "net_stride", "dense_coeff", "infer_side"}) {
    if (!j.contains(key)) throw FormatError(std::string("geometry JSON missing key ") + key);
  }
  return derive_geometry(j.at("patch_side").get<int>(), j.at("net_stride").get<int>(),
                         j.at("dense_coeff").get<int>(), j.at("infer_side").get<int>());
}

ScanGeometry load_geometry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open geometry config " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return geometry_from_json(text);
}

std::string geometry_to_json(const ScanGeometry& g) {
  nlohmann::json j{{"patch_side", g.patch_side},
                   {"net_stride", g.net_stride},
                   {"dense_coeff", g.dense_coeff},
                   {"infer_side", g.infer_side}};
  return j.dump(2) + "\n";
}

void save_geometry(const ScanGeometry& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write geometry config " + path.string());
  out << geometry_to_json(g);
}

}  // namespace densescan
