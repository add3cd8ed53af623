#include <filesystem>
#include <fstream>

#include "densescan/errors.hpp"
#include "densescan/preproc.hpp"
#include "densescan/synthgen.hpp"
#include "doctest.h"

using namespace densescan;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "densescan_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::uint8_t> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

SlideRecipe small_recipe(std::uint64_t seed) {
  SlideRecipe r = random_recipe("s", seed, true, 512, 1, 1, 2);
  r.levels = 2;
  return r;
}

}  // namespace

TEST_SUITE_BEGIN("synthgen");

TEST_CASE("same seed generates bit-identical slide files") {
  const auto dir_a = temp_dir("gen_a");
  const auto dir_b = temp_dir("gen_b");
  const SlideRecipe recipe = small_recipe(12);
  generate_slide(recipe, dir_a);
  generate_slide(recipe, dir_b);

  for (const auto& entry : fs::recursive_directory_iterator(dir_a / "s")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir_a / "s");
    REQUIRE(fs::exists(dir_b / "s" / rel));
    REQUIRE(read_file(entry.path()) == read_file(dir_b / "s" / rel));
  }
}

TEST_CASE("a zero-lesion recipe produces a normal slide") {
  const auto dir = temp_dir("normal");
  SlideRecipe r = random_recipe("n", 5, false, 512, 0, 0, 2);
  r.levels = 2;
  const GeneratedSlide slide = generate_slide(r, dir);
  CHECK(slide.annotation.polygons.empty());
  CHECK_FALSE(slide.annotation.tumor());
  const LesionAnnotation loaded = load_annotation(slide.annotation_path);
  CHECK(loaded.polygons.empty());
}

TEST_CASE("measured white fraction approaches the target") {
  const auto dir = temp_dir("whitefrac");
  SlideRecipe r = random_recipe("w", 9, false, 1024, 0, 0, 0);
  r.levels = 2;
  r.white_fraction = 0.75;
  generate_slide(r, dir);

  const SlidePyramid slide = SlidePyramid::open(dir / "w" / "manifest.json");
  std::size_t white = 0, total = 0;
  for (std::int64_t y0 = 0; y0 < 1024; y0 += 512) {
    for (std::int64_t x0 = 0; x0 < 1024; x0 += 512) {
      const ImageRGB block = slide.fetch_region({0, y0, x0, 512});
      for (int y = 0; y < 512; ++y) {
        const std::uint8_t* row = block.row(y);
        for (int x = 0; x < 512; ++x) {
          total++;
          if (row[3 * x] == 255 && row[3 * x + 1] == 255 && row[3 * x + 2] == 255) white++;
        }
      }
    }
  }
  const double measured = static_cast<double>(white) / static_cast<double>(total);
  CHECK(measured == doctest::Approx(0.75).epsilon(0.0667));  // +-0.05 absolute
}

TEST_CASE("annotation polygons trace the painted lesions") {
  const auto dir = temp_dir("fidelity");
  SlideRecipe r;
  r.slide_id = "f";
  r.seed = 77;
  r.height = r.width = 512;
  r.levels = 1;
  r.white_fraction = 0.5;
  r.lesions.push_back({256, 256, 18, "macro"});
  r.lesions.push_back({180, 330, 7, "micro"});
  const GeneratedSlide slide = generate_slide(r, dir);
  REQUIRE(slide.annotation.polygons.size() == 2);

  const SlidePyramid pyramid = SlidePyramid::open(slide.manifest_path);
  const ImageRGB full = pyramid.fetch_region({0, 0, 0, 512});

  for (std::size_t li = 0; li < r.lesions.size(); ++li) {
    const auto& lesion = r.lesions[li];
    const auto& poly = slide.annotation.polygons[li];

    std::size_t painted = 0;
    for (std::int64_t y = 0; y < 512; ++y) {
      for (std::int64_t x = 0; x < 512; ++x) {
        const double dy = static_cast<double>(y) - lesion.cy;
        const double dx = static_cast<double>(x) - lesion.cx;
        if (dy * dy + dx * dx <= lesion.radius * lesion.radius) {
          painted++;
          // every lesion pixel lies inside its polygon
          REQUIRE(point_in_polygon(poly, static_cast<double>(x), static_cast<double>(y)));
        }
      }
    }

    // polygon area within 5% of the painted area (shoelace)
    double area2 = 0;
    for (std::size_t i = 0; i < poly.points.size(); ++i) {
      const auto& a = poly.points[i];
      const auto& b = poly.points[(i + 1) % poly.points.size()];
      area2 += a[0] * b[1] - b[0] * a[1];
    }
    const double poly_area = std::abs(area2) / 2.0;
    CHECK(poly_area == doctest::Approx(static_cast<double>(painted)).epsilon(0.05));
  }
}

TEST_CASE("lesions outside tissue or overlapping mimics are rejected") {
  SlideRecipe r;
  r.slide_id = "bad";
  r.seed = 3;
  r.height = r.width = 512;
  r.white_fraction = 0.75;

  SUBCASE("lesion in the white margin") {
    r.lesions.push_back({10, 10, 8, "micro"});
    CHECK_THROWS_AS(generate_slide(r, temp_dir("bad1")), RecipeError);
  }
  SUBCASE("lesion overlapping a mimic") {
    r.lesions.push_back({256, 256, 10, "micro"});
    r.mimics.push_back({258, 258, 10});
    CHECK_THROWS_AS(generate_slide(r, temp_dir("bad2")), RecipeError);
  }
}

TEST_CASE("tissue mask recovers the recipe footprint") {
  const auto dir = temp_dir("maskiou");
  SlideRecipe r = random_recipe("m", 21, false, 1024, 0, 0, 0);
  r.levels = 3;
  generate_slide(r, dir);
  const SlidePyramid slide = SlidePyramid::open(dir / "m" / "manifest.json");

  const TissueMask mask = tissue_mask(slide, 2);
  const std::int64_t scale = 4;  // level 2
  std::size_t inter = 0, uni = 0;
  for (int my = 0; my < mask.height; ++my) {
    for (int mx = 0; mx < mask.width; ++mx) {
      const double y = static_cast<double>(my) * scale + scale / 2.0;
      const double x = static_cast<double>(mx) * scale + scale / 2.0;
      const bool truth = recipe_tissue_contains(r, y, x);
      const bool predicted = mask.at(my, mx);
      if (truth && predicted) inter++;
      if (truth || predicted) uni++;
    }
  }
  REQUIRE(uni > 0);
  const double iou = static_cast<double>(inter) / static_cast<double>(uni);
  CHECK(iou >= 0.95);
}

TEST_CASE("benchmark manifest counts, splits and determinism") {
  const auto dir_a = temp_dir("bench_a");
  const BenchmarkManifest m = generate_benchmark(6, 4, 99, dir_a, 256);

  CHECK(m.split("train").size() == 6);
  CHECK(m.split("test").size() == 4);
  int tumor_train = 0, tumor_test = 0, normal_test = 0;
  for (const auto& s : m.slides) {
    if (s.split == "train" && s.label == "tumor") tumor_train++;
    if (s.split == "test" && s.label == "tumor") tumor_test++;
    if (s.split == "test" && s.label == "normal") normal_test++;
  }
  CHECK(tumor_train >= 1);
  CHECK(tumor_test >= 1);
  CHECK(normal_test >= 1);

  // every referenced path exists and loads
  for (const auto& s : m.slides) {
    CHECK(fs::exists(s.manifest_path));
    const LesionAnnotation ann = load_annotation(s.annotation_path);
    CHECK(ann.tumor() == (s.label == "tumor"));
  }

  const BenchmarkManifest loaded = load_benchmark_manifest(dir_a / "manifest.json");
  REQUIRE(loaded.slides.size() == m.slides.size());
  CHECK(loaded.slides[0].slide_id == m.slides[0].slide_id);

  SUBCASE("fixed seed reproduces the manifest") {
    const auto dir_b = temp_dir("bench_b");
    const BenchmarkManifest m2 = generate_benchmark(6, 4, 99, dir_b, 256);
    REQUIRE(m2.slides.size() == m.slides.size());
    for (std::size_t i = 0; i < m.slides.size(); ++i) {
      CHECK(m2.slides[i].slide_id == m.slides[i].slide_id);
      CHECK(m2.slides[i].label == m.slides[i].label);
      CHECK(read_file(m2.slides[i].annotation_path) == read_file(m.slides[i].annotation_path));
    }
  }

  SUBCASE("empty test split is rejected") {
    CHECK_THROWS_AS(generate_benchmark(6, 0, 1, temp_dir("bench_c"), 256), ManifestError);
    CHECK_THROWS_AS(generate_benchmark(0, 4, 1, temp_dir("bench_d"), 256), ManifestError);
  }
}

TEST_CASE("recipe JSON round trip") {
  const auto dir = temp_dir("recipeio");
  const SlideRecipe r = small_recipe(8);
  save_recipe(r, dir / "r.json");
  const SlideRecipe back = load_recipe(dir / "r.json");
  CHECK(back.slide_id == r.slide_id);
  CHECK(back.seed == r.seed);
  CHECK(back.height == r.height);
  CHECK(back.lesions.size() == r.lesions.size());
  CHECK(back.mimics.size() == r.mimics.size());
  CHECK(back.white_fraction == r.white_fraction);
}

TEST_SUITE_END();
