#include "densescan/reconstruct.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>

#include "densescan/errors.hpp"
#include "json.hpp"

namespace densescan {

DenseTile interleave(const std::vector<OffsetTile>& opts, const ScanGeometry& g) {
  const int alpha = g.dense_coeff;
  const std::size_t expected = static_cast<std::size_t>(alpha) * alpha;
  if (opts.size() != expected) {
    throw ArityError("expected " + std::to_string(expected) + " offset tiles, got " +
                     std::to_string(opts.size()));
  }

  std::vector<const OffsetTile*> by_offset(expected, nullptr);
  const int side = opts.front().side;
  for (const auto& t : opts) {
    if (t.side != side) throw ShapeError("offset tiles have mixed sides");
    if (t.offset.row < 0 || t.offset.row >= alpha || t.offset.col < 0 || t.offset.col >= alpha) {
      throw ArityError("offset index out of range");
    }
    const std::size_t k = static_cast<std::size_t>(t.offset.row) * alpha + t.offset.col;
    if (by_offset[k]) throw ArityError("duplicate offset tile (" + std::to_string(t.offset.row) +
                                       "," + std::to_string(t.offset.col) + ")");
    by_offset[k] = &t;
  }

  DenseTile out;
  out.side = alpha * side;
  out.p.resize(static_cast<std::size_t>(out.side) * out.side);
  for (int hp = 0; hp < out.side; ++hp) {
    const int i = hp % alpha;
    const int h = hp / alpha;
    for (int wp = 0; wp < out.side; ++wp) {
      const int j = wp % alpha;
      const int w = wp / alpha;
      out.p[static_cast<std::size_t>(hp) * out.side + wp] =
          by_offset[static_cast<std::size_t>(i) * alpha + j]->at(h, w);
    }
  }
  return out;
}

DenseTile scan_roi(const SlidePyramid& slide, std::int64_t roi_y, std::int64_t roi_x,
                   const ScanGeometry& g, const ConvNet& net) {
  if (roi_y % g.roi_stride != 0 || roi_x % g.roi_stride != 0) {
    throw RangeError("ROI origin must lie on the S_r grid");
  }
  const NetGeometry ng = net.net_geometry();
  if (ng.receptive_field != g.patch_side || ng.total_stride != g.net_stride) {
    throw SpecError("net geometry (" + std::to_string(ng.receptive_field) + "," +
                    std::to_string(ng.total_stride) + ") does not match scan geometry (" +
                    std::to_string(g.patch_side) + "," + std::to_string(g.net_stride) + ")");
  }

  std::vector<OffsetTile> opts;
  opts.reserve(static_cast<std::size_t>(g.dense_coeff) * g.dense_coeff);
  for (const Offset& o : offsets(g)) {
    ImageRGB window = slide.fetch_region({0, roi_y + o.dy, roi_x + o.dx, g.infer_side});
    ProbabilityGrid grid = net.forward(window);
    if (grid.height != g.tile_side || grid.width != g.tile_side) {
      throw SizeError("forward produced " + std::to_string(grid.height) + "x" +
                      std::to_string(grid.width) + ", expected tile side " +
                      std::to_string(g.tile_side));
    }
    OffsetTile t;
    t.offset = o;
    t.side = g.tile_side;
    t.p = std::move(grid.p);
    opts.push_back(std::move(t));
  }

  DenseTile tile = interleave(opts, g);
  tile.roi_row = roi_y / g.roi_stride;
  tile.roi_col = roi_x / g.roi_stride;
  return tile;
}

namespace {

void place_tile(ProbabilityMap& map, const DenseTile& tile, const ScanGeometry& g) {
  const std::int64_t base_y = tile.roi_row * static_cast<std::int64_t>(g.dense_tile_side());
  const std::int64_t base_x = tile.roi_col * static_cast<std::int64_t>(g.dense_tile_side());
  const std::int64_t ymax = std::min<std::int64_t>(tile.side, map.height - base_y);
  const std::int64_t xmax = std::min<std::int64_t>(tile.side, map.width - base_x);
  for (std::int64_t y = 0; y < ymax; ++y) {
    float* prow = map.p.data() + (base_y + y) * map.width + base_x;
    std::uint8_t* crow = map.covered.data() + (base_y + y) * map.width + base_x;
    const float* src = tile.p.data() + y * tile.side;
    std::memcpy(prow, src, static_cast<std::size_t>(xmax) * sizeof(float));
    std::memset(crow, 1, static_cast<std::size_t>(xmax));
  }
}

ProbabilityMap empty_map(std::int64_t slide_height, std::int64_t slide_width,
                         const ScanGeometry& g, const std::string& slide_id) {
  ProbabilityMap map;
  map.height = map_cells(slide_height, g);
  map.width = map_cells(slide_width, g);
  map.geometry = g;
  map.slide_id = slide_id;
  map.p.assign(static_cast<std::size_t>(map.height) * map.width, 0.0f);
  map.covered.assign(static_cast<std::size_t>(map.height) * map.width, 0);
  return map;
}

}  // namespace

ProbabilityMap stitch(const std::vector<DenseTile>& tiles, std::int64_t slide_height,
                      std::int64_t slide_width, const ScanGeometry& g,
                      const std::string& slide_id) {
  ProbabilityMap map = empty_map(slide_height, slide_width, g, slide_id);
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  for (const auto& tile : tiles) {
    if (!seen.insert({tile.roi_row, tile.roi_col}).second) {
      throw DuplicateTileError("dense tile (" + std::to_string(tile.roi_row) + "," +
                               std::to_string(tile.roi_col) + ") placed twice");
    }
    if (tile.side != g.dense_tile_side()) {
      throw ShapeError("dense tile side " + std::to_string(tile.side) + ", expected " +
                       std::to_string(g.dense_tile_side()));
    }
    place_tile(map, tile, g);
  }
  return map;
}

ProbabilityMap scan_slide(const SlidePyramid& slide, const ScanGeometry& g, const ConvNet& net,
                          const MaskFn& mask, const PipelineConfig& pipeline, ScanReport* report) {
  ProbabilityMap map = empty_map(slide.height0(), slide.width0(), g, slide.slide_id());

  const int dts = g.dense_tile_side();
  const std::int64_t roi_rows = (map.height + dts - 1) / dts;
  const std::int64_t roi_cols = (map.width + dts - 1) / dts;

  // Footprint of every patch an ROI evaluates: the stitched cells span
  // S_r - S_d onward plus one patch side.
  const std::int64_t footprint = g.roi_stride - g.dense_stride + g.patch_side;

  std::vector<std::pair<std::int64_t, std::int64_t>> origins;
  std::int64_t skipped = 0;
  for (std::int64_t r = 0; r < roi_rows; ++r) {
    for (std::int64_t c = 0; c < roi_cols; ++c) {
      const std::int64_t y = r * g.roi_stride;
      const std::int64_t x = c * g.roi_stride;
      if (mask && !mask(y, x, footprint)) {
        skipped++;
        continue;
      }
      origins.emplace_back(y, x);
    }
  }

  const std::uint64_t macs_before = conv_mac_count();
  PipelineStats pstats = run_pipeline(
      origins.size(),
      [&](std::size_t i) { return scan_roi(slide, origins[i].first, origins[i].second, g, net); },
      [&](std::size_t, DenseTile&& tile) { place_tile(map, tile, g); }, pipeline);

  if (report) {
    report->rois_total = roi_rows * roi_cols;
    report->rois_scanned = static_cast<std::int64_t>(origins.size());
    report->rois_skipped = skipped;
    report->conv_macs = conv_mac_count() - macs_before;
    report->pipeline = pstats;
  }
  return map;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {
const char kPmapMagic[7] = {'D', 'S', 'P', 'M', 'v', '1', '\n'};
}

void save_pmap(const ProbabilityMap& map, const std::filesystem::path& path) {
  nlohmann::json j{{"height", map.height},
                   {"width", map.width},
                   {"dense_stride", map.geometry.dense_stride},
                   {"patch_side", map.geometry.patch_side},
                   {"slide_id", map.slide_id},
                   {"net_stride", map.geometry.net_stride},
                   {"dense_coeff", map.geometry.dense_coeff},
                   {"infer_side", map.geometry.infer_side}};
  const std::string header = j.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write probability map " + path.string());
  out.write(kPmapMagic, sizeof(kPmapMagic));
  const std::uint32_t len = static_cast<std::uint32_t>(header.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header.data(), header.size());
  out.write(reinterpret_cast<const char*>(map.p.data()), map.p.size() * sizeof(float));

  std::vector<std::uint8_t> bits((map.p.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < map.covered.size(); ++i) {
    if (map.covered[i]) bits[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  out.write(reinterpret_cast<const char*>(bits.data()), bits.size());
  if (!out) throw IoError("failed writing probability map " + path.string());
}

ProbabilityMap load_pmap(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open probability map " + path.string());
  char magic[sizeof(kPmapMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kPmapMagic, sizeof(kPmapMagic)) != 0) {
    throw FormatError("not a probability map: " + path.string());
  }
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header(len, '\0');
  in.read(header.data(), len);
  if (!in) throw FormatError("truncated pmap header in " + path.string());

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad pmap header: " + std::string(e.what()));
  }

  ProbabilityMap map;
  map.height = j.at("height").get<std::int64_t>();
  map.width = j.at("width").get<std::int64_t>();
  map.slide_id = j.at("slide_id").get<std::string>();
  map.geometry = derive_geometry(j.at("patch_side").get<int>(), j.at("net_stride").get<int>(),
                                 j.at("dense_coeff").get<int>(), j.at("infer_side").get<int>());

  const std::size_t cells = static_cast<std::size_t>(map.height) * map.width;
  map.p.resize(cells);
  in.read(reinterpret_cast<char*>(map.p.data()), cells * sizeof(float));
  std::vector<std::uint8_t> bits((cells + 7) / 8);
  in.read(reinterpret_cast<char*>(bits.data()), bits.size());
  if (!in) throw FormatError("truncated pmap payload in " + path.string());
  map.covered.resize(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    map.covered[i] = (bits[i / 8] >> (i % 8)) & 1u;
  }
  return map;
}

}  // namespace densescan
