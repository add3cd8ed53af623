#include <random>

#include "densescan/errors.hpp"
#include "densescan/geometry.hpp"
#include "doctest.h"

using namespace densescan;

TEST_SUITE_BEGIN("geometry");

TEST_CASE("derive_geometry reproduces the production configuration") {
  const ScanGeometry g = derive_geometry(244, 32, 1, 2868);
  CHECK(g.tile_side == 83);
  CHECK(g.dense_stride == 32);
  CHECK(g.roi_stride == 2656);
  CHECK(g.infer_side == 2868);
}

TEST_CASE("derive_geometry for the denser alpha=2 configuration") {
  const ScanGeometry g = derive_geometry(244, 32, 2, 2868);
  CHECK(g.dense_stride == 16);
  CHECK(g.tile_side == 83);
  CHECK(g.dense_tile_side() == 166);
  // ROI spacing keeps dense tiles non-overlapping: S_d * (alpha * L_p).
  CHECK(g.roi_stride == 16 * 166);
}

TEST_CASE("derive_geometry toy configuration") {
  const ScanGeometry g = derive_geometry(20, 4, 2, 36);
  CHECK(g.tile_side == 5);
  CHECK(g.dense_stride == 2);
  CHECK(g.roi_stride == g.dense_stride * g.dense_tile_side());
}

TEST_CASE("derive_geometry rejects bad inputs") {
  CHECK_THROWS_AS(derive_geometry(244, 32, 3, 2868), DivisibilityError);
  CHECK_THROWS_AS(derive_geometry(244, 32, 1, 2870), DivisibilityError);
  CHECK_THROWS_AS(derive_geometry(244, 32, 1, 200), RangeError);
  CHECK_THROWS_AS(derive_geometry(0, 32, 1, 2868), RangeError);
  CHECK_THROWS_AS(derive_geometry(243, 32, 1, 2867), DivisibilityError);  // odd patch side
}

TEST_CASE("offsets enumerate row-major") {
  SUBCASE("alpha=1") {
    const auto offs = offsets(toy_geometry(1));
    REQUIRE(offs.size() == 1);
    CHECK(offs[0] == Offset{0, 0, 0, 0});
  }
  SUBCASE("alpha=2 with S_d=16") {
    const auto offs = offsets(derive_geometry(244, 32, 2, 2868));
    REQUIRE(offs.size() == 4);
    CHECK(offs[0] == Offset{0, 0, 0, 0});
    CHECK(offs[1] == Offset{0, 1, 0, 16});
    CHECK(offs[2] == Offset{1, 0, 16, 0});
    CHECK(offs[3] == Offset{1, 1, 16, 16});
  }
  SUBCASE("alpha=4 with S_d=8") {
    const auto offs = offsets(derive_geometry(244, 32, 4, 2868));
    REQUIRE(offs.size() == 16);
    CHECK(offs.back().dy == 24);
    CHECK(offs.back().dx == 24);
  }
}

TEST_CASE("map cell to slide coordinate") {
  CHECK(map_prob_to_slide(0, derive_geometry(244, 32, 1, 2868)) == 122);
  CHECK(map_prob_to_slide(10, derive_geometry(244, 32, 2, 2868)) == 282);
  CHECK(map_prob_to_slide(5, derive_geometry(20, 4, 2, 36)) == 20);
}

TEST_CASE("slide coordinate to nearest map cell") {
  CHECK(map_slide_to_prob(122, derive_geometry(244, 32, 1, 2868)) == 0);
  CHECK(map_slide_to_prob(283, derive_geometry(244, 32, 2, 2868)) == 10);
  CHECK_THROWS_AS(map_slide_to_prob(100, derive_geometry(244, 32, 1, 2868)), OutOfFrameError);
}

TEST_CASE("round trip over random cells") {
  std::mt19937_64 rng(7);
  const ScanGeometry geoms[] = {derive_geometry(244, 32, 1, 2868), derive_geometry(244, 32, 2, 2868),
                                toy_geometry(1), toy_geometry(2), toy_geometry(4)};
  for (const auto& g : geoms) {
    for (int i = 0; i < 200; ++i) {
      const std::int64_t cell = static_cast<std::int64_t>(rng() % 100000);
      CHECK(map_slide_to_prob(map_prob_to_slide(cell, g), g) == cell);
    }
  }
}

TEST_CASE("alpha=1 degenerates to the plain FCN stride") {
  const ScanGeometry g = toy_geometry(1);
  CHECK(g.dense_stride == g.net_stride);
  CHECK(offsets(g).size() == 1);
}

TEST_CASE("JSON config round trip recomputes derived fields") {
  const ScanGeometry g = derive_geometry(244, 32, 2, 2868);
  const ScanGeometry back = geometry_from_json(geometry_to_json(g));
  CHECK(back.patch_side == g.patch_side);
  CHECK(back.net_stride == g.net_stride);
  CHECK(back.dense_coeff == g.dense_coeff);
  CHECK(back.infer_side == g.infer_side);
  CHECK(back.tile_side == g.tile_side);
  CHECK(back.roi_stride == g.roi_stride);

  CHECK_THROWS_AS(geometry_from_json("{\"patch_side\": 20}"), FormatError);
  CHECK_THROWS_AS(geometry_from_json("not json"), FormatError);
}

TEST_SUITE_END();
