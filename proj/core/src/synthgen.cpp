#include "densescan/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "densescan/errors.hpp"
#include "densescan/rng.hpp"
#include "densescan/slide.hpp"
#include "json.hpp"

namespace densescan {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kPolygonVertices = 64;

// Smooth lattice noise in [-1,1]: bilinear interpolation of per-cell hashes.
double lattice_noise(std::uint64_t seed, double y, double x, double period) {
  const double fy = y / period, fx = x / period;
  const auto y0 = static_cast<std::int64_t>(std::floor(fy));
  const auto x0 = static_cast<std::int64_t>(std::floor(fx));
  const double ty = fy - static_cast<double>(y0);
  const double tx = fx - static_cast<double>(x0);
  const double n00 = coord_noise(seed, x0, y0);
  const double n01 = coord_noise(seed, x0 + 1, y0);
  const double n10 = coord_noise(seed, x0, y0 + 1);
  const double n11 = coord_noise(seed, x0 + 1, y0 + 1);
  return (n00 * (1 - tx) + n01 * tx) * (1 - ty) + (n10 * (1 - tx) + n11 * tx) * ty;
}

struct TissueField {
  double cy, cx;    // ellipse center
  double ay, ax;    // semi-axes
  double wobble;
  std::uint64_t seed;

  bool contains(double y, double x) const {
    const double v = (y - cy) / ay;
    const double u = (x - cx) / ax;
    const double rho = std::sqrt(u * u + v * v);
    if (rho > 1.0 + wobble) return false;
    if (rho <= 1.0 - wobble) return true;
    const double f = 1.0 + wobble * lattice_noise(seed, y, x, 64.0);
    return rho <= f;
  }
};

TissueField tissue_field(const SlideRecipe& r) {
  TissueField f;
  f.cy = static_cast<double>(r.height) / 2.0;
  f.cx = static_cast<double>(r.width) / 2.0;
  const double s = std::sqrt(std::max(0.01, 1.0 - r.white_fraction) / kPi);
  f.ay = r.height * s;
  f.ax = r.width * s;
  f.wobble = r.tissue_wobble;
  f.seed = derive_seed(r.seed, 0xb10b);
  return f;
}

std::uint8_t clamp_channel(double v) {
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

Polygon lesion_polygon(const LesionSpec& l) {
  // Circumradius chosen so the polygon's inscribed circle still covers every
  // painted pixel; area stays within a few percent of the disc.
  const double R = (l.radius + 0.1) / std::cos(kPi / kPolygonVertices);
  Polygon poly;
  poly.points.reserve(kPolygonVertices);
  for (int k = 0; k < kPolygonVertices; ++k) {
    const double phi = 2.0 * kPi * k / kPolygonVertices;
    poly.points.push_back({l.cx + R * std::cos(phi), l.cy + R * std::sin(phi)});
  }
  return poly;
}

void validate_recipe(const SlideRecipe& r, const TissueField& tissue) {
  if (r.height <= 0 || r.width <= 0 || r.levels <= 0 || r.tile_side <= 0) {
    throw RecipeError("recipe dims must be strictly positive");
  }

  auto disc_in_tissue = [&](double cy, double cx, double radius) {
    if (!tissue.contains(cy, cx)) return false;
    for (int k = 0; k < 16; ++k) {
      const double phi = 2.0 * kPi * k / 16;
      if (!tissue.contains(cy + radius * std::sin(phi), cx + radius * std::cos(phi))) return false;
    }
    return true;
  };

  struct Disc {
    double cy, cx, r;
    const char* what;
  };
  std::vector<Disc> discs;
  for (const auto& l : r.lesions) {
    if (l.radius < 3) throw RecipeError("lesion radius must be >= 3");
    if (!disc_in_tissue(l.cy, l.cx, l.radius + 2)) {
      throw RecipeError("lesion at (" + std::to_string(l.cy) + "," + std::to_string(l.cx) +
                        ") leaves the tissue region");
    }
    discs.push_back({l.cy, l.cx, l.radius, "lesion"});
  }
  for (const auto& m : r.mimics) {
    if (m.radius < 3) throw RecipeError("mimic radius must be >= 3");
    if (!disc_in_tissue(m.cy, m.cx, m.radius + 2)) {
      throw RecipeError("mimic at (" + std::to_string(m.cy) + "," + std::to_string(m.cx) +
                        ") leaves the tissue region");
    }
    discs.push_back({m.cy, m.cx, m.radius, "mimic"});
  }
  for (std::size_t i = 0; i < discs.size(); ++i) {
    for (std::size_t j = i + 1; j < discs.size(); ++j) {
      const double dy = discs[i].cy - discs[j].cy;
      const double dx = discs[i].cx - discs[j].cx;
      const double min_gap = discs[i].r + discs[j].r + 4;
      if (dy * dy + dx * dx < min_gap * min_gap) {
        throw RecipeError(std::string(discs[i].what) + " and " + discs[j].what +
                          " footprints overlap");
      }
    }
  }
}

}  // namespace

bool recipe_tissue_contains(const SlideRecipe& recipe, double y, double x) {
  return tissue_field(recipe).contains(y, x);
}

GeneratedSlide generate_slide(const SlideRecipe& recipe, const std::filesystem::path& out_dir) {
  const TissueField tissue = tissue_field(recipe);
  validate_recipe(recipe, tissue);

  const auto slide_dir = out_dir / recipe.slide_id;
  SlidePyramidWriter writer(slide_dir, recipe.slide_id, recipe.height, recipe.width, recipe.levels,
                            recipe.tile_side);

  const std::uint64_t hf_seed = derive_seed(recipe.seed, 1);
  const std::uint64_t lf_seed = derive_seed(recipe.seed, 2);

  std::vector<std::uint8_t> row(static_cast<std::size_t>(recipe.width) * 3);
  struct RowDisc {
    double cy, cx, r2;
    bool lesion;
  };
  std::vector<RowDisc> row_discs;

  for (std::int64_t y = 0; y < recipe.height; ++y) {
    std::fill(row.begin(), row.end(), 255);

    // Horizontal extent the tissue blob can reach on this row.
    const double v = (y - tissue.cy) / tissue.ay;
    const double vmax = 1.0 + tissue.wobble;
    if (std::abs(v) <= vmax) {
      const double span = std::sqrt(std::max(0.0, vmax * vmax - v * v)) * tissue.ax;
      const auto x_begin = std::max<std::int64_t>(0, static_cast<std::int64_t>(tissue.cx - span) - 1);
      const auto x_end =
          std::min<std::int64_t>(recipe.width, static_cast<std::int64_t>(tissue.cx + span) + 2);

      row_discs.clear();
      for (const auto& l : recipe.lesions) {
        if (std::abs(l.cy - y) <= l.radius) row_discs.push_back({l.cy, l.cx, l.radius * l.radius, true});
      }
      for (const auto& m : recipe.mimics) {
        if (std::abs(m.cy - y) <= m.radius)
          row_discs.push_back({m.cy, m.cx, m.radius * m.radius, false});
      }

      for (std::int64_t x = x_begin; x < x_end; ++x) {
        if (!tissue.contains(static_cast<double>(y), static_cast<double>(x))) continue;

        const std::array<int, 3>* base = &recipe.tissue_color;
        double lf_amp = recipe.tissue_lf, hf_amp = recipe.tissue_hf;
        for (const auto& d : row_discs) {
          const double dy = y - d.cy, dx = x - d.cx;
          if (dy * dy + dx * dx <= d.r2) {
            base = &recipe.lesion_color;  // mimics share the lesion color
            if (d.lesion) {
              lf_amp = recipe.lesion_lf;
              hf_amp = recipe.lesion_hf;
            } else {
              lf_amp = recipe.mimic_lf;
              hf_amp = recipe.mimic_hf;
            }
            break;
          }
        }

        const double lf = lattice_noise(lf_seed, static_cast<double>(y), static_cast<double>(x), 8.0);
        const double hf = coord_noise(hf_seed, x, y);
        const double shift = lf * lf_amp + hf * hf_amp;
        std::uint8_t* px = row.data() + x * 3;
        px[0] = clamp_channel((*base)[0] + shift);
        px[1] = clamp_channel((*base)[1] + shift);
        px[2] = clamp_channel((*base)[2] + shift);
      }
    }
    writer.append_rows(row.data(), 1);
  }

  GeneratedSlide out;
  out.slide_dir = slide_dir;
  out.manifest_path = writer.finish();

  out.annotation.slide_id = recipe.slide_id;
  for (const auto& l : recipe.lesions) out.annotation.polygons.push_back(lesion_polygon(l));
  out.annotation_path = slide_dir / "annotation.json";
  save_annotation(out.annotation, out.annotation_path);

  out.mimics = recipe.mimics;
  out.mimics_path = slide_dir / "mimics.json";
  {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& m : recipe.mimics) {
      arr.push_back({{"cy", m.cy}, {"cx", m.cx}, {"radius", m.radius}});
    }
    nlohmann::json j{{"slide_id", recipe.slide_id}, {"mimics", arr}};
    std::ofstream f(out.mimics_path);
    if (!f) throw IoError("cannot write " + out.mimics_path.string());
    f << j.dump() << "\n";
  }
  save_recipe(recipe, slide_dir / "recipe.json");
  return out;
}

SlideRecipe random_recipe(const std::string& slide_id, std::uint64_t seed, bool tumor,
                          std::int64_t side, int n_micro, int n_macro, int n_mimics) {
  SlideRecipe r;
  r.slide_id = slide_id;
  r.seed = seed;
  r.height = r.width = side;
  const TissueField tissue = tissue_field(r);

  std::mt19937_64 rng(derive_seed(seed, 0x91ace));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  struct Disc {
    double cy, cx, radius;
  };
  std::vector<Disc> placed;

  auto place = [&](double rmin, double rmax) -> Disc {
    for (int attempt = 0; attempt < 4000; ++attempt) {
      const double radius = rmin + (rmax - rmin) * unit(rng);
      // Uniform point in the safe core of the ellipse.
      const double ang = 2.0 * kPi * unit(rng);
      const double rr = std::sqrt(unit(rng)) * (1.0 - r.tissue_wobble) * 0.92;
      const double cy = tissue.cy + rr * std::sin(ang) * tissue.ay;
      const double cx = tissue.cx + rr * std::cos(ang) * tissue.ax;

      bool ok = tissue.contains(cy, cx);
      for (int k = 0; ok && k < 16; ++k) {
        const double phi = 2.0 * kPi * k / 16;
        ok = tissue.contains(cy + (radius + 3) * std::sin(phi), cx + (radius + 3) * std::cos(phi));
      }
      for (const auto& d : placed) {
        if (!ok) break;
        const double dy = cy - d.cy, dx = cx - d.cx;
        const double gap = radius + d.radius + 8;
        if (dy * dy + dx * dx < gap * gap) ok = false;
      }
      if (ok) {
        placed.push_back({cy, cx, radius});
        return placed.back();
      }
    }
    throw RecipeError("could not place a disc after 4000 attempts; slide too crowded");
  };

  if (tumor) {
    for (int i = 0; i < n_micro; ++i) {
      const Disc d = place(5.0, 9.0);
      r.lesions.push_back({d.cy, d.cx, d.radius, "micro"});
    }
    for (int i = 0; i < n_macro; ++i) {
      const Disc d = place(24.0, 40.0);
      r.lesions.push_back({d.cy, d.cx, d.radius, "macro"});
    }
  }
  for (int i = 0; i < n_mimics; ++i) {
    const Disc d = place(10.0, 22.0);
    r.mimics.push_back({d.cy, d.cx, d.radius});
  }
  return r;
}

// ---------------------------------------------------------------------------
// Recipe / manifest serialization

namespace {

nlohmann::json recipe_to_json(const SlideRecipe& r) {
  nlohmann::json lesions = nlohmann::json::array();
  for (const auto& l : r.lesions) {
    lesions.push_back({{"cy", l.cy}, {"cx", l.cx}, {"radius", l.radius}, {"kind", l.kind}});
  }
  nlohmann::json mimics = nlohmann::json::array();
  for (const auto& m : r.mimics) {
    mimics.push_back({{"cy", m.cy}, {"cx", m.cx}, {"radius", m.radius}});
  }
  return nlohmann::json{{"slide_id", r.slide_id},
                        {"seed", r.seed},
                        {"height", r.height},
                        {"width", r.width},
                        {"levels", r.levels},
                        {"tile_side", r.tile_side},
                        {"white_fraction", r.white_fraction},
                        {"tissue_wobble", r.tissue_wobble},
                        {"lesions", lesions},
                        {"mimics", mimics},
                        {"tissue_color", r.tissue_color},
                        {"lesion_color", r.lesion_color},
                        {"tissue_lf", r.tissue_lf},
                        {"tissue_hf", r.tissue_hf},
                        {"lesion_lf", r.lesion_lf},
                        {"lesion_hf", r.lesion_hf},
                        {"mimic_lf", r.mimic_lf},
                        {"mimic_hf", r.mimic_hf}};
}

SlideRecipe recipe_from_json(const nlohmann::json& j) {
  SlideRecipe r;
  r.slide_id = j.at("slide_id").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.height = j.at("height").get<std::int64_t>();
  r.width = j.at("width").get<std::int64_t>();
  r.levels = j.value("levels", r.levels);
  r.tile_side = j.value("tile_side", r.tile_side);
  r.white_fraction = j.value("white_fraction", r.white_fraction);
  r.tissue_wobble = j.value("tissue_wobble", r.tissue_wobble);
  if (j.contains("lesions")) {
    for (const auto& jl : j.at("lesions")) {
      r.lesions.push_back({jl.at("cy").get<double>(), jl.at("cx").get<double>(),
                           jl.at("radius").get<double>(), jl.value("kind", std::string("macro"))});
    }
  }
  if (j.contains("mimics")) {
    for (const auto& jm : j.at("mimics")) {
      r.mimics.push_back(
          {jm.at("cy").get<double>(), jm.at("cx").get<double>(), jm.at("radius").get<double>()});
    }
  }
  if (j.contains("tissue_color")) r.tissue_color = j.at("tissue_color").get<std::array<int, 3>>();
  if (j.contains("lesion_color")) r.lesion_color = j.at("lesion_color").get<std::array<int, 3>>();
  r.tissue_lf = j.value("tissue_lf", r.tissue_lf);
  r.tissue_hf = j.value("tissue_hf", r.tissue_hf);
  r.lesion_lf = j.value("lesion_lf", r.lesion_lf);
  r.lesion_hf = j.value("lesion_hf", r.lesion_hf);
  r.mimic_lf = j.value("mimic_lf", r.mimic_lf);
  r.mimic_hf = j.value("mimic_hf", r.mimic_hf);
  return r;
}

}  // namespace

SlideRecipe load_recipe(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open recipe " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed recipe " + path.string() + ": " + e.what());
  }
  try {
    return recipe_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("recipe " + path.string() + " missing field: " + e.what());
  }
}

void save_recipe(const SlideRecipe& recipe, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write recipe " + path.string());
  out << recipe_to_json(recipe).dump(2) << "\n";
}

std::vector<BenchmarkSlide> BenchmarkManifest::split(const std::string& which) const {
  std::vector<BenchmarkSlide> out;
  for (const auto& s : slides) {
    if (s.split == which) out.push_back(s);
  }
  return out;
}

BenchmarkManifest generate_benchmark(int n_train, int n_test, std::uint64_t seed,
                                     const std::filesystem::path& out_dir, std::int64_t side) {
  if (n_train < 1) throw ManifestError("benchmark needs at least one training slide");
  if (n_test < 1) throw ManifestError("benchmark needs a test set");

  // Mirror the source corpus class balance (11 tumor : 16 normal).
  const int train_tumor = std::max(1, static_cast<int>(std::lround(n_train * 11.0 / 27.0)));
  const int test_tumor = std::max(1, static_cast<int>(std::lround(n_test * 5.0 / 13.0)));
  if (test_tumor >= n_test && n_test > 1) {
    throw ManifestError("test split would have no normal slides");
  }

  BenchmarkManifest manifest;
  manifest.seed = seed;
  manifest.side = side;

  std::uint64_t index = 0;
  auto add = [&](const std::string& split, bool tumor, int count) {
    for (int i = 0; i < count; ++i, ++index) {
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%s_%03d", split.c_str(), tumor ? "tumor" : "normal", i);
      SlideRecipe recipe =
          random_recipe(name, derive_seed(seed, index), tumor, side, /*n_micro=*/2,
                        /*n_macro=*/2, /*n_mimics=*/5);
      GeneratedSlide slide = generate_slide(recipe, out_dir);
      BenchmarkSlide entry;
      entry.slide_id = name;
      entry.label = tumor ? "tumor" : "normal";
      entry.split = split;
      entry.manifest_path = slide.manifest_path;
      entry.annotation_path = slide.annotation_path;
      entry.mimics_path = slide.mimics_path;
      manifest.slides.push_back(std::move(entry));
    }
  };

  add("train", true, train_tumor);
  add("train", false, n_train - train_tumor);
  add("test", true, test_tumor);
  add("test", false, n_test - test_tumor);

  save_benchmark_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

BenchmarkManifest load_benchmark_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open benchmark manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed benchmark manifest: " + std::string(e.what()));
  }

  BenchmarkManifest manifest;
  manifest.seed = j.value("seed", 0ull);
  manifest.side = j.value("side", 0ll);
  const auto base = path.parent_path();
  for (const auto& js : j.at("slides")) {
    BenchmarkSlide s;
    s.slide_id = js.at("slide_id").get<std::string>();
    s.label = js.at("label").get<std::string>();
    s.split = js.at("split").get<std::string>();
    s.manifest_path = base / js.at("slide").get<std::string>();
    s.annotation_path = base / js.at("annotation").get<std::string>();
    if (js.contains("mimics")) s.mimics_path = base / js.at("mimics").get<std::string>();
    manifest.slides.push_back(std::move(s));
  }
  return manifest;
}

void save_benchmark_manifest(const BenchmarkManifest& manifest,
                             const std::filesystem::path& path) {
  const auto base = path.parent_path();
  nlohmann::json slides = nlohmann::json::array();
  for (const auto& s : manifest.slides) {
    slides.push_back({{"slide_id", s.slide_id},
                      {"label", s.label},
                      {"split", s.split},
                      {"slide", std::filesystem::relative(s.manifest_path, base).string()},
                      {"annotation", std::filesystem::relative(s.annotation_path, base).string()},
                      {"mimics", std::filesystem::relative(s.mimics_path, base).string()}});
  }
  nlohmann::json j{{"seed", manifest.seed}, {"side", manifest.side}, {"slides", slides}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write benchmark manifest " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace densescan
