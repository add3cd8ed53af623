#include <filesystem>
#include <random>

#include "densescan/errors.hpp"
#include "densescan/postproc.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace densescan;

namespace {

ProbabilityMap make_map(std::int64_t h, std::int64_t w, const ScanGeometry& g) {
  ProbabilityMap m;
  m.height = h;
  m.width = w;
  m.geometry = g;
  m.slide_id = "m";
  m.p.assign(static_cast<std::size_t>(h) * w, 0.0f);
  m.covered.assign(static_cast<std::size_t>(h) * w, 1);
  return m;
}

BinaryMap random_mask(std::int64_t h, std::int64_t w, double density, std::uint64_t seed) {
  BinaryMap m;
  m.height = h;
  m.width = w;
  m.v.assign(static_cast<std::size_t>(h) * w, 0);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& b : m.v) b = u(rng) < density ? 1 : 0;
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("postproc");

TEST_CASE("binarize thresholds at >= and respects coverage") {
  ProbabilityMap m = make_map(3, 3, toy_geometry(1));
  m.p = {0.4f, 0.4f, 0.4f, 0.4f, 0.5f, 0.6f, 0.0f, 0.9f, 0.4f};
  m.covered[7] = 0;  // stored 0.9 but never scanned

  const BinaryMap b = binarize(m, 0.5);
  CHECK_FALSE(b.at(0, 0));
  CHECK(b.at(1, 1));       // exactly 0.5 counts
  CHECK(b.at(1, 2));
  CHECK_FALSE(b.at(2, 1)); // uncovered
  CHECK_THROWS_AS(binarize(m, 0.0), RangeError);

  SUBCASE("all 0.4 map binarizes to nothing") {
    ProbabilityMap low = make_map(4, 4, toy_geometry(1));
    std::fill(low.p.begin(), low.p.end(), 0.4f);
    const BinaryMap none = binarize(low, 0.5);
    for (const auto v : none.v) REQUIRE(v == 0);
  }

  SUBCASE("raising the threshold never adds cells") {
    std::mt19937_64 rng(17);
    ProbabilityMap r = make_map(20, 20, toy_geometry(1));
    for (auto& p : r.p) p = static_cast<float>(rng() % 1000) / 999.0f;
    const BinaryMap lo = binarize(r, 0.3);
    const BinaryMap hi = binarize(r, 0.7);
    for (std::size_t i = 0; i < r.p.size(); ++i) {
      if (hi.v[i]) REQUIRE(lo.v[i]);
    }
  }
}

TEST_CASE("opening removes an isolated cell but keeps a solid block") {
  BinaryMap m;
  m.height = m.width = 9;
  m.v.assign(81, 0);
  m.set(1, 1, true);  // isolated
  for (std::int64_t y = 3; y < 8; ++y) {
    for (std::int64_t x = 3; x < 8; ++x) m.set(y, x, true);  // 5x5 block
  }

  const BinaryMap opened = morph_open(m, 1);
  CHECK_FALSE(opened.at(1, 1));
  for (std::int64_t y = 3; y < 8; ++y) {
    for (std::int64_t x = 3; x < 8; ++x) REQUIRE(opened.at(y, x));
  }
  CHECK(morph_open(m, 0).v == m.v);  // r=0 identity
}

TEST_CASE("opening equals the erosion/dilation oracle and is idempotent") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const BinaryMap m = random_mask(32, 24, 0.45, seed);
    for (int r : {1, 2}) {
      const BinaryMap opened = morph_open(m, r);
      const BinaryMap expected = oracles::dilate_oracle(oracles::erode_oracle(m, r), r);
      REQUIRE(opened.v == expected.v);

      // idempotence and anti-extensivity
      REQUIRE(morph_open(opened, r).v == opened.v);
      for (std::size_t i = 0; i < m.v.size(); ++i) {
        if (opened.v[i]) REQUIRE(m.v[i]);
      }
    }
  }
}

TEST_CASE("connected components: conventions") {
  BinaryMap m;
  m.height = m.width = 4;
  m.v.assign(16, 0);

  SUBCASE("empty mask has zero components") {
    CHECK(connected_components(m).count == 0);
  }
  SUBCASE("diagonal touch is one component under 8-connectivity") {
    m.set(0, 0, true);
    m.set(1, 1, true);
    CHECK(connected_components(m).count == 1);
  }
  SUBCASE("separated cells are distinct components") {
    m.set(0, 0, true);
    m.set(3, 3, true);
    m.set(0, 3, true);
    CHECK(connected_components(m).count == 3);
  }
}

TEST_CASE("labels agree with the flood-fill oracle on random masks") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const BinaryMap m = random_mask(64, 64, 0.35 + 0.05 * seed, 100 + seed);
    const LabelGrid grid = connected_components(m);
    const oracles::FloodLabels expected = oracles::flood_fill_oracle(m);
    REQUIRE(grid.count == expected.count);
    REQUIRE(oracles::same_partition(grid.label, expected.label));
  }
}

TEST_CASE("detection coordinates map through the patch-center anchor") {
  const ScanGeometry g = derive_geometry(244, 32, 1, 2868);
  ProbabilityMap m = make_map(8, 8, g);
  m.p[3 * 8 + 4] = 0.9f;
  m.p[3 * 8 + 5] = 0.6f;

  const BinaryMap b = binarize(m, 0.5);
  const LabelGrid regions = connected_components(b);
  const auto dets = extract_detections(m, regions);
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].x == 250);  // 4*32 + 122
  CHECK(dets[0].y == 218);  // 3*32 + 122
  CHECK(dets[0].score == doctest::Approx(0.9));
}

TEST_CASE("tied maxima resolve to the lexicographically smallest cell") {
  ProbabilityMap m = make_map(4, 4, toy_geometry(1));
  m.p[1 * 4 + 2] = 0.8f;
  m.p[2 * 4 + 1] = 0.8f;
  m.p[1 * 4 + 1] = 0.6f;  // connects them into one component

  const auto dets = extract_detections(m, connected_components(binarize(m, 0.5)));
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].y == map_prob_to_slide(1, m.geometry));
  CHECK(dets[0].x == map_prob_to_slide(2, m.geometry));
}

TEST_CASE("no components, no detections") {
  ProbabilityMap m = make_map(4, 4, toy_geometry(1));
  const auto dets = extract_detections(m, connected_components(binarize(m, 0.5)));
  CHECK(dets.empty());
}

TEST_CASE("slide score is the max over covered cells") {
  ProbabilityMap m = make_map(4, 4, toy_geometry(1));
  m.p[5] = 0.97f;
  m.p[9] = 0.40f;
  CHECK(slide_score(m) == doctest::Approx(0.97));

  SUBCASE("uncovered max does not count") {
    m.covered[5] = 0;
    CHECK(slide_score(m) == doctest::Approx(0.40));
  }
  SUBCASE("fully uncovered map scores zero") {
    std::fill(m.covered.begin(), m.covered.end(), 0);
    CHECK(slide_score(m) == 0.0);
  }
}

TEST_CASE("slide score dominates every detection score on random maps") {
  std::mt19937_64 rng(55);
  for (int trial = 0; trial < 30; ++trial) {
    ProbabilityMap m = make_map(24, 24, toy_geometry(1));
    for (auto& p : m.p) p = static_cast<float>(rng() % 1000) / 999.0f;
    for (auto& c : m.covered) c = rng() % 8 != 0;

    const auto dets = extract_detections(m, connected_components(binarize(m, 0.5)));
    const double s = slide_score(m);
    for (const auto& d : dets) REQUIRE(d.score <= s + 1e-12);
    const LabelGrid regions = connected_components(binarize(m, 0.5));
    REQUIRE(static_cast<int>(dets.size()) == regions.count);
  }
}

TEST_CASE("detections CSV round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "densescan_tests";
  std::filesystem::create_directories(dir);

  std::vector<Detection> dets{{"s1", 250, 218, 0.912345, 1}, {"s2", 10, 20, 0.5, 1}};
  write_detections_csv(dir / "dets.csv", dets);
  const auto back = read_detections_csv(dir / "dets.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].slide_id == "s1");
  CHECK(back[0].x == 250);
  CHECK(back[0].y == 218);
  CHECK(back[0].score == doctest::Approx(0.912345));

  write_slide_scores_csv(dir / "scores.csv", {{"s1", 0.97}, {"s2", 0.03}});
  const auto scores = read_slide_scores_csv(dir / "scores.csv");
  REQUIRE(scores.size() == 2);
  CHECK(scores[0].first == "s1");
  CHECK(scores[1].second == doctest::Approx(0.03));

  CHECK_THROWS_AS(write_detections_csv("/proc/nope/d.csv", dets), IoError);
}

TEST_SUITE_END();
