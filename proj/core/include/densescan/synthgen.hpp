#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "densescan/annotations.hpp"

namespace densescan {

struct LesionSpec {
  double cy = 0, cx = 0;
  double radius = 0;
  std::string kind;  // "micro" | "macro"
};

struct MimicSpec {
  double cy = 0, cx = 0;
  double radius = 0;
};

// Fully determines a slide bit-for-bit: textures are hash noise in (seed,x,y),
// so generation order and tiling never affect pixels.
struct SlideRecipe {
  std::string slide_id = "slide";
  std::uint64_t seed = 0;
  std::int64_t height = 4096;
  std::int64_t width = 4096;
  int levels = 4;
  int tile_side = 512;

  double white_fraction = 0.75;   // target background fraction
  double tissue_wobble = 0.10;    // boundary wobble amplitude
  std::vector<LesionSpec> lesions;
  std::vector<MimicSpec> mimics;

  // texture statistics; mimics share the lesion color but tissue-like texture
  std::array<int, 3> tissue_color{210, 170, 190};
  std::array<int, 3> lesion_color{150, 95, 140};
  double tissue_lf = 20, tissue_hf = 6;
  double lesion_lf = 15, lesion_hf = 40;
  double mimic_lf = 20, mimic_hf = 6;
};

SlideRecipe load_recipe(const std::filesystem::path& path);
void save_recipe(const SlideRecipe& recipe, const std::filesystem::path& path);

struct GeneratedSlide {
  std::filesystem::path slide_dir;       // contains manifest.json + tiles
  std::filesystem::path manifest_path;
  std::filesystem::path annotation_path;
  std::filesystem::path mimics_path;
  LesionAnnotation annotation;
  std::vector<MimicSpec> mimics;
};

// Writes the slide pyramid, the lesion annotation (polygons tracing each
// lesion footprint) and a mimic-footprint sidecar under out_dir/slide_id/.
// Throws RecipeError when a lesion or mimic leaves the tissue region or
// overlaps another one.
GeneratedSlide generate_slide(const SlideRecipe& recipe, const std::filesystem::path& out_dir);

// True iff the level-0 point lies inside the recipe's tissue blob (the same
// field the generator paints); exposed so tests can check mask fidelity.
bool recipe_tissue_contains(const SlideRecipe& recipe, double y, double x);

// Convenience recipe with randomly placed lesions/mimics inside the tissue.
SlideRecipe random_recipe(const std::string& slide_id, std::uint64_t seed, bool tumor,
                          std::int64_t side = 4096, int n_micro = 2, int n_macro = 2,
                          int n_mimics = 5);

struct BenchmarkSlide {
  std::string slide_id;
  std::string label;  // "tumor" | "normal"
  std::string split;  // "train" | "test"
  std::filesystem::path manifest_path;
  std::filesystem::path annotation_path;
  std::filesystem::path mimics_path;
};

struct BenchmarkManifest {
  std::uint64_t seed = 0;
  std::int64_t side = 0;
  std::vector<BenchmarkSlide> slides;

  std::vector<BenchmarkSlide> split(const std::string& which) const;
};

// Desk-scale mirror of a train/test WSI corpus: n_train slides (tumor fraction
// 11/27) plus n_test held-out slides. Throws ManifestError when either count
// is zero. Slide content is deterministic in (seed, index).
BenchmarkManifest generate_benchmark(int n_train, int n_test, std::uint64_t seed,
                                     const std::filesystem::path& out_dir,
                                     std::int64_t side = 4096);

BenchmarkManifest load_benchmark_manifest(const std::filesystem::path& path);
void save_benchmark_manifest(const BenchmarkManifest& manifest,
                             const std::filesystem::path& path);

}  // namespace densescan
