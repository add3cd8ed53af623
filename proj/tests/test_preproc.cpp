#include <filesystem>
#include <random>

#include "densescan/errors.hpp"
#include "densescan/preproc.hpp"
#include "densescan/slide.hpp"
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

}  // namespace

TEST_SUITE_BEGIN("preproc");

TEST_CASE("two equal delta peaks split between the modes") {
  Histogram256 h{};
  h[10] = 500;
  h[200] = 500;
  const int t = otsu_threshold(h);
  CHECK(t == oracles::otsu_exhaustive(h));
  CHECK(t > 10);
  CHECK(t < 200);
}

TEST_CASE("single-bin histogram is degenerate") {
  Histogram256 h{};
  h[128] = 1234;
  CHECK_THROWS_AS(otsu_threshold(h), DegenerateHistogramError);
  Histogram256 empty{};
  CHECK_THROWS_AS(otsu_threshold(empty), DegenerateHistogramError);
}

TEST_CASE("threshold matches the exhaustive variance scan on random histograms") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 1000; ++trial) {
    Histogram256 h{};
    const int bins = 2 + static_cast<int>(rng() % 64);
    for (int b = 0; b < bins; ++b) {
      h[rng() % 256] += rng() % 100 + 1;
    }
    int occupied = 0;
    for (const auto c : h) occupied += (c != 0);
    if (occupied <= 1) continue;
    CHECK(otsu_threshold(h) == oracles::otsu_exhaustive(h));
  }
}

TEST_CASE("half white, half gray slide masks exactly the gray half") {
  const auto dir = temp_dir("halfgray");
  ImageRGB img(256, 256);
  img.fill(255, 255, 255);
  for (int y = 0; y < 256; ++y) {
    for (int x = 0; x < 128; ++x) {
      auto* px = img.at(y, x);
      px[0] = px[1] = px[2] = 100;
    }
  }
  write_slide(img, dir / "s", "s", 2, 128);
  const SlidePyramid slide = SlidePyramid::open(dir / "s" / "manifest.json");

  const TissueMask mask = tissue_mask(slide, 1);
  CHECK(mask.level == 1);
  CHECK(mask.height == 128);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      REQUIRE(mask.at(y, x) == (x < 64));
    }
  }
}

TEST_CASE("uniform slide yields an empty degenerate mask") {
  const auto dir = temp_dir("uniform");
  ImageRGB img(128, 128);
  img.fill(255, 255, 255);
  write_slide(img, dir / "s", "s", 1, 128);
  const SlidePyramid slide = SlidePyramid::open(dir / "s" / "manifest.json");
  const TissueMask mask = tissue_mask(slide, 5);  // clamped to level 0
  CHECK(mask.degenerate);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) REQUIRE_FALSE(mask.at(y, x));
  }
}

TEST_CASE("mask level clamps to the top level") {
  const auto dir = temp_dir("clamp");
  ImageRGB img(64, 64);
  img.fill(255, 255, 255);
  for (int y = 20; y < 40; ++y) {
    for (int x = 20; x < 40; ++x) {
      auto* px = img.at(y, x);
      px[0] = px[1] = px[2] = 90;
    }
  }
  write_slide(img, dir / "s", "s", 2, 64);
  const SlidePyramid slide = SlidePyramid::open(dir / "s" / "manifest.json");
  const TissueMask mask = tissue_mask(slide, 5);
  CHECK(mask.level == 1);
}

TEST_CASE("level-0 predicate is conservatively correct") {
  TissueMask mask;
  mask.level = 3;  // 8x8 level-0 pixels per cell
  mask.height = 4;
  mask.width = 4;
  mask.tissue.assign(16, 0);
  mask.tissue[1 * 4 + 2] = 1;  // cell (1,2) covers level-0 [8,16) x [16,24)

  const RoiMaskPredicate pred = map_mask_to_level0(mask);
  CHECK(pred(8, 16, 8));    // fully inside the tissue cell
  CHECK(pred(10, 20, 1));
  CHECK_FALSE(pred(0, 0, 8));   // fully in background
  CHECK(pred(0, 0, 17));        // straddles into the tissue cell: conservative
  CHECK(pred(15, 23, 2));       // corner touch
  CHECK_FALSE(pred(16, 24, 8)); // starts just past the cell
  CHECK_FALSE(pred(200, 200, 8));

  // No false rejection: every query containing a tissue pixel answers true.
  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i) {
    const std::int64_t y = rng() % 40;
    const std::int64_t x = rng() % 40;
    const std::int64_t s = 1 + rng() % 20;
    const bool overlaps_cell = y < 16 && y + s > 8 && x < 24 && x + s > 16;
    if (overlaps_cell) REQUIRE(pred(y, x, s));
  }
}

TEST_CASE("mask PNG round trip") {
  const auto dir = temp_dir("maskio");
  TissueMask mask;
  mask.level = 2;
  mask.height = 10;
  mask.width = 14;
  mask.tissue.assign(140, 0);
  std::mt19937_64 rng(8);
  for (auto& c : mask.tissue) c = rng() % 3 == 0;

  save_mask(mask, dir / "mask.png");
  const TissueMask back = load_mask(dir / "mask.png");
  CHECK(back.level == 2);
  CHECK(back.tissue == mask.tissue);
}

TEST_SUITE_END();
