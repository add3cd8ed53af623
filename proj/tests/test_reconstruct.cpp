#include <filesystem>
#include <random>
#include <set>

#include "densescan/errors.hpp"
#include "densescan/reconstruct.hpp"
#include "densescan/synthgen.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace densescan;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "densescan_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

OffsetTile constant_tile(int i, int j, int side, float value, const ScanGeometry& g) {
  OffsetTile t;
  t.offset = {i, j, i * g.dense_stride, j * g.dense_stride};
  t.side = side;
  t.p.assign(static_cast<std::size_t>(side) * side, value);
  return t;
}

// Small textured slide for dense-vs-patch comparisons.
SlidePyramid make_test_slide(const fs::path& dir, std::int64_t side, std::uint64_t seed) {
  SlideRecipe recipe = random_recipe("t", seed, true, side, 1, 1, 2);
  recipe.levels = 2;
  generate_slide(recipe, dir);
  return SlidePyramid::open(dir / "t" / "manifest.json");
}

// Patch-based sliding window at stride S_d: the brute-force reference the
// dense path must reproduce.
void check_against_bruteforce(const SlidePyramid& slide, const ProbabilityMap& map,
                              const ConvNet& net, const ScanGeometry& g, double tol) {
  for (std::int64_t y = 0; y < map.height; ++y) {
    for (std::int64_t x = 0; x < map.width; ++x) {
      if (!map.is_covered(y, x)) continue;
      const ImageRGB patch =
          slide.fetch_region({0, y * g.dense_stride, x * g.dense_stride, g.patch_side});
      REQUIRE(map.at(y, x) == doctest::Approx(net.patch_score(patch)).epsilon(tol));
    }
  }
}

}  // namespace

TEST_SUITE_BEGIN("reconstruct");

TEST_CASE("interleave with alpha=1 is the identity") {
  const ScanGeometry g = toy_geometry(1);
  std::vector<OffsetTile> opts{constant_tile(0, 0, g.tile_side, 0.25f, g)};
  std::mt19937_64 rng(1);
  for (auto& v : opts[0].p) v = static_cast<float>(rng() % 1000) / 1000.0f;
  const DenseTile dpt = interleave(opts, g);
  CHECK(dpt.side == g.tile_side);
  CHECK(dpt.p == opts[0].p);
}

TEST_CASE("interleave of four 1x1 tiles lays out [[a,b],[c,d]]") {
  ScanGeometry g = derive_geometry(20, 4, 2, 20);  // L_p = 1
  std::vector<OffsetTile> opts{
      constant_tile(0, 0, 1, 0.1f, g), constant_tile(0, 1, 1, 0.2f, g),
      constant_tile(1, 0, 1, 0.3f, g), constant_tile(1, 1, 1, 0.4f, g)};
  const DenseTile dpt = interleave(opts, g);
  REQUIRE(dpt.side == 2);
  CHECK(dpt.at(0, 0) == 0.1f);
  CHECK(dpt.at(0, 1) == 0.2f);
  CHECK(dpt.at(1, 0) == 0.3f);
  CHECK(dpt.at(1, 1) == 0.4f);
}

TEST_CASE("constant offset tiles alternate by the mod pattern") {
  const ScanGeometry g = toy_geometry(2);
  std::vector<OffsetTile> opts{
      constant_tile(0, 0, g.tile_side, 0.1f, g), constant_tile(0, 1, g.tile_side, 0.2f, g),
      constant_tile(1, 0, g.tile_side, 0.3f, g), constant_tile(1, 1, g.tile_side, 0.4f, g)};
  const DenseTile dpt = interleave(opts, g);
  const float expect[2][2] = {{0.1f, 0.2f}, {0.3f, 0.4f}};
  for (int y = 0; y < dpt.side; ++y) {
    for (int x = 0; x < dpt.side; ++x) {
      REQUIRE(dpt.at(y, x) == expect[y % 2][x % 2]);
    }
  }
}

TEST_CASE("interleave matches the index-formula oracle on random tiles") {
  for (int alpha : {2, 4}) {
    const ScanGeometry g = toy_geometry(alpha);
    std::mt19937_64 rng(alpha);
    std::vector<OffsetTile> opts;
    for (int i = 0; i < alpha; ++i) {
      for (int j = 0; j < alpha; ++j) {
        OffsetTile t = constant_tile(i, j, g.tile_side, 0, g);
        for (auto& v : t.p) v = static_cast<float>(rng() % 10000) * 1e-4f;
        opts.push_back(std::move(t));
      }
    }
    const DenseTile dpt = interleave(opts, g);

    std::multiset<float> in_values, out_values(dpt.p.begin(), dpt.p.end());
    for (const auto& t : opts) in_values.insert(t.p.begin(), t.p.end());
    CHECK(in_values == out_values);  // pure shuffle conserves the multiset

    for (int hp = 0; hp < dpt.side; ++hp) {
      for (int wp = 0; wp < dpt.side; ++wp) {
        const auto& src = opts[static_cast<std::size_t>(hp % alpha) * alpha + (wp % alpha)];
        REQUIRE(dpt.at(hp, wp) == src.at(hp / alpha, wp / alpha));
      }
    }
  }
}

TEST_CASE("interleave arity and shape errors") {
  const ScanGeometry g = toy_geometry(2);
  std::vector<OffsetTile> three{constant_tile(0, 0, 5, 0.f, g), constant_tile(0, 1, 5, 0.f, g),
                                constant_tile(1, 0, 5, 0.f, g)};
  CHECK_THROWS_AS(interleave(three, g), ArityError);

  std::vector<OffsetTile> dup{constant_tile(0, 0, 5, 0.f, g), constant_tile(0, 1, 5, 0.f, g),
                              constant_tile(1, 0, 5, 0.f, g), constant_tile(1, 0, 5, 0.f, g)};
  CHECK_THROWS_AS(interleave(dup, g), ArityError);

  std::vector<OffsetTile> mixed{constant_tile(0, 0, 5, 0.f, g), constant_tile(0, 1, 5, 0.f, g),
                                constant_tile(1, 0, 5, 0.f, g), constant_tile(1, 1, 4, 0.f, g)};
  CHECK_THROWS_AS(interleave(mixed, g), ShapeError);
}

TEST_CASE("scan_roi with alpha=1 equals the single forward pass") {
  const auto dir = temp_dir("roi_a1");
  const SlidePyramid slide = make_test_slide(dir, 256, 31);
  const ScanGeometry g = toy_geometry(1);
  ConvNet net = ConvNet::toy_default();
  net.init_random(4);

  const DenseTile tile = scan_roi(slide, 0, 0, g, net);
  const ProbabilityGrid direct = net.forward(slide.fetch_region({0, 0, 0, g.infer_side}));
  CHECK(tile.side == g.tile_side);
  CHECK(tile.p == direct.p);

  CHECK_THROWS_AS(scan_roi(slide, 3, 0, g, net), RangeError);  // off the S_r grid
}

TEST_CASE("scan_roi dense tile equals per-patch scores at stride S_d") {
  const auto dir = temp_dir("roi_a2");
  const SlidePyramid slide = make_test_slide(dir, 256, 32);
  const ScanGeometry g = toy_geometry(2);
  ConvNet net = ConvNet::toy_default();
  net.init_random(5);

  const std::int64_t oy = g.roi_stride, ox = 0;
  const DenseTile tile = scan_roi(slide, oy, ox, g, net);
  REQUIRE(tile.side == g.dense_tile_side());
  for (int y = 0; y < tile.side; ++y) {
    for (int x = 0; x < tile.side; ++x) {
      const ImageRGB patch = slide.fetch_region(
          {0, oy + static_cast<std::int64_t>(y) * g.dense_stride,
           ox + static_cast<std::int64_t>(x) * g.dense_stride, g.patch_side});
      REQUIRE(tile.at(y, x) == doctest::Approx(net.patch_score(patch)).epsilon(1e-5));
    }
  }
}

TEST_CASE("net/geometry mismatch is rejected") {
  const auto dir = temp_dir("mismatch");
  const SlidePyramid slide = make_test_slide(dir, 128, 33);
  ConvNet net = ConvNet::toy_default();  // rf 20, stride 4
  const ScanGeometry g = derive_geometry(24, 4, 1, 36);
  CHECK_THROWS_AS(scan_roi(slide, 0, 0, g, net), SpecError);
}

TEST_CASE("stitch places one ROI and leaves the rest uncovered") {
  const ScanGeometry g = toy_geometry(1);
  DenseTile tile;
  tile.roi_row = 0;
  tile.roi_col = 0;
  tile.side = g.dense_tile_side();
  tile.p.assign(static_cast<std::size_t>(tile.side) * tile.side, 0.7f);

  const ProbabilityMap map = stitch({tile}, 128, 128, g, "s");
  CHECK(map.height == map_cells(128, g));
  for (std::int64_t y = 0; y < map.height; ++y) {
    for (std::int64_t x = 0; x < map.width; ++x) {
      const bool in_tile = y < tile.side && x < tile.side;
      REQUIRE(map.is_covered(y, x) == in_tile);
      REQUIRE(map.at(y, x) == (in_tile ? 0.7f : 0.0f));
    }
  }
}

TEST_CASE("adjacent ROI boundary cells differ by exactly S_d in slide space") {
  const ScanGeometry g = toy_geometry(2);
  const std::int64_t last_of_roi0 = g.dense_tile_side() - 1;
  const std::int64_t first_of_roi1 = g.dense_tile_side();
  CHECK(map_prob_to_slide(first_of_roi1, g) - map_prob_to_slide(last_of_roi0, g) ==
        g.dense_stride);
}

TEST_CASE("duplicate ROI index is rejected") {
  const ScanGeometry g = toy_geometry(1);
  DenseTile t;
  t.side = g.dense_tile_side();
  t.p.assign(static_cast<std::size_t>(t.side) * t.side, 0.1f);
  CHECK_THROWS_AS(stitch({t, t}, 256, 256, g, "s"), DuplicateTileError);
}

TEST_CASE("map dimensions cover every whole patch position") {
  const ScanGeometry g = toy_geometry(2);  // S_d = 2, L_i = 20
  CHECK(map_cells(256, g) == (256 - 20) / 2 + 1);
  CHECK(map_cells(20, g) == 1);
  CHECK(map_cells(19, g) == 0);
  CHECK(map_cells(21, g) == 1);
}

TEST_CASE("dense scan equals brute force for alpha in {1,2}") {
  const auto dir = temp_dir("dense_eq");
  const SlidePyramid slide = make_test_slide(dir, 192, 34);
  ConvNet net = ConvNet::toy_default();
  net.init_random(6);

  for (int alpha : {1, 2}) {
    const ScanGeometry g = toy_geometry(alpha);
    const ProbabilityMap map = scan_slide(slide, g, net, {}, {2, 4, true});
    CHECK(map.height == map_cells(192, g));
    for (const auto c : map.covered) REQUIRE(c == 1);  // no mask: everything scanned
    check_against_bruteforce(slide, map, net, g, 1e-5);
  }
}

TEST_CASE("alpha refinement: even cells of the alpha=2 map equal the alpha=1 map") {
  const auto dir = temp_dir("refine");
  const SlidePyramid slide = make_test_slide(dir, 224, 35);
  ConvNet net = ConvNet::toy_default();
  net.init_random(7);

  const ProbabilityMap m1 = scan_slide(slide, toy_geometry(1), net, {}, {2, 4, true});
  const ProbabilityMap m2 = scan_slide(slide, toy_geometry(2), net, {}, {2, 4, true});
  REQUIRE(m2.height >= 2 * m1.height - 1);
  for (std::int64_t y = 0; y < m1.height; ++y) {
    for (std::int64_t x = 0; x < m1.width; ++x) {
      REQUIRE(m2.at(2 * y, 2 * x) == m1.at(y, x));  // bit identical
    }
  }
}

TEST_CASE("scan output is independent of producer count and mask-skipped ROIs stay at zero") {
  const auto dir = temp_dir("order");
  const SlidePyramid slide = make_test_slide(dir, 192, 36);
  ConvNet net = ConvNet::toy_default();
  net.init_random(8);
  const ScanGeometry g = toy_geometry(2);

  const TissueMask mask = tissue_mask(slide, 2);
  const RoiMaskPredicate pred = map_mask_to_level0(mask);
  const MaskFn mask_fn = [&](std::int64_t y, std::int64_t x, std::int64_t s) {
    return pred(y, x, s);
  };

  ScanReport r1, r8;
  const ProbabilityMap a = scan_slide(slide, g, net, mask_fn, {1, 2, true}, &r1);
  const ProbabilityMap b = scan_slide(slide, g, net, mask_fn, {8, 5, true}, &r8);
  CHECK(a.p == b.p);
  CHECK(a.covered == b.covered);
  CHECK(r1.rois_scanned == r8.rois_scanned);
  CHECK(r1.rois_skipped > 0);  // the synthetic slide has white background

  for (std::int64_t y = 0; y < a.height; ++y) {
    for (std::int64_t x = 0; x < a.width; ++x) {
      if (!a.is_covered(y, x)) REQUIRE(a.at(y, x) == 0.0f);
    }
  }
}

TEST_CASE("all-white slide scans to an all-uncovered map") {
  const auto dir = temp_dir("white");
  ImageRGB img(128, 128);
  img.fill(255, 255, 255);
  write_slide(img, dir / "w", "w", 2, 64);
  const SlidePyramid slide = SlidePyramid::open(dir / "w" / "manifest.json");

  const TissueMask mask = tissue_mask(slide, 1);  // degenerate: empty mask
  const RoiMaskPredicate pred = map_mask_to_level0(mask);
  ConvNet net = ConvNet::toy_default();
  net.init_random(9);

  const ProbabilityMap map = scan_slide(
      slide, toy_geometry(1), net,
      [&](std::int64_t y, std::int64_t x, std::int64_t s) { return pred(y, x, s); }, {2, 2, true});
  for (const auto c : map.covered) REQUIRE(c == 0);
}

TEST_CASE("pmap file round trip") {
  const auto dir = temp_dir("pmapio");
  const SlidePyramid slide = make_test_slide(dir, 160, 37);
  ConvNet net = ConvNet::toy_default();
  net.init_random(10);

  const ProbabilityMap map = scan_slide(slide, toy_geometry(2), net, {}, {2, 4, true});
  save_pmap(map, dir / "t.pmap");
  const ProbabilityMap back = load_pmap(dir / "t.pmap");
  CHECK(back.height == map.height);
  CHECK(back.width == map.width);
  CHECK(back.slide_id == map.slide_id);
  CHECK(back.p == map.p);
  CHECK(back.covered == map.covered);
  CHECK(back.geometry.roi_stride == map.geometry.roi_stride);

  CHECK_THROWS_AS(load_pmap(dir / "missing.pmap"), IoError);
}

TEST_CASE("work count: dense scanning does strictly less conv work than patch scanning") {
  const auto dir = temp_dir("work");
  const SlidePyramid slide = make_test_slide(dir, 192, 38);
  ConvNet net = ConvNet::toy_default();
  net.init_random(11);
  const ScanGeometry g = toy_geometry(1);

  ScanReport report;
  const ProbabilityMap map = scan_slide(slide, g, net, {}, {2, 4, true}, &report);

  reset_conv_mac_count();
  for (std::int64_t y = 0; y < map.height; ++y) {
    for (std::int64_t x = 0; x < map.width; ++x) {
      const ImageRGB patch =
          slide.fetch_region({0, y * g.dense_stride, x * g.dense_stride, g.patch_side});
      net.patch_score(patch);
    }
  }
  const std::uint64_t patch_macs = conv_mac_count();
  CHECK(report.conv_macs < patch_macs);
  CHECK(report.conv_macs > 0);
}

TEST_SUITE_END();
