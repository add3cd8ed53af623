#include "densescan/preproc.hpp"

#include <algorithm>
#include <fstream>

#include "densescan/errors.hpp"
#include "densescan/png_io.hpp"
#include "json.hpp"

namespace densescan {

int otsu_threshold(const Histogram256& histogram) {
  std::uint64_t total = 0;
  int occupied = 0;
  for (const auto c : histogram) {
    total += c;
    occupied += (c != 0);
  }
  if (total == 0) throw DegenerateHistogramError("empty histogram");
  if (occupied <= 1) throw DegenerateHistogramError("all histogram mass in one bin");

  double sum_all = 0;
  for (int v = 0; v < 256; ++v) sum_all += static_cast<double>(v) * histogram[v];

  // Candidate t splits into {v < t} and {v >= t}.
  int best_t = 0;
  double best_var = -1.0;
  std::uint64_t w0 = 0;
  double sum0 = 0;
  for (int t = 0; t < 256; ++t) {
    if (t > 0) {
      w0 += histogram[t - 1];
      sum0 += static_cast<double>(t - 1) * histogram[t - 1];
    }
    const std::uint64_t w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    const double mu0 = sum0 / w0;
    const double mu1 = (sum_all - sum0) / w1;
    const double var = static_cast<double>(w0) * static_cast<double>(w1) * (mu0 - mu1) * (mu0 - mu1);
    if (var > best_var) {
      best_var = var;
      best_t = t;
    }
  }
  return best_t;
}

TissueMask tissue_mask(const SlidePyramid& slide, int mask_level) {
  const int level = std::clamp(mask_level, 0, slide.levels() - 1);
  const auto [h, w] = slide.level_dims(level);

  TissueMask mask;
  mask.level = level;
  mask.height = static_cast<int>(h);
  mask.width = static_cast<int>(w);
  mask.tissue.assign(static_cast<std::size_t>(h) * w, 0);

  // One pass for the histogram, one for the mask, fetched in bands so large
  // levels never need a single full-frame buffer.
  const int band = 512;
  std::vector<std::uint8_t> gray(static_cast<std::size_t>(h) * w);
  for (std::int64_t y0 = 0; y0 < h; y0 += band) {
    for (std::int64_t x0 = 0; x0 < w; x0 += band) {
      ImageRGB block = slide.fetch_region({level, y0, x0, band});
      const std::int64_t ymax = std::min<std::int64_t>(band, h - y0);
      const std::int64_t xmax = std::min<std::int64_t>(band, w - x0);
      for (std::int64_t y = 0; y < ymax; ++y) {
        const std::uint8_t* src = block.row(static_cast<int>(y));
        for (std::int64_t x = 0; x < xmax; ++x) {
          gray[(y0 + y) * w + (x0 + x)] = luma(src[3 * x], src[3 * x + 1], src[3 * x + 2]);
        }
      }
    }
  }

  Histogram256 hist{};
  for (const auto v : gray) hist[v]++;

  int threshold = 0;
  try {
    threshold = otsu_threshold(hist);
  } catch (const DegenerateHistogramError&) {
    mask.degenerate = true;
    return mask;  // uniform slide: empty mask
  }

  for (std::size_t i = 0; i < gray.size(); ++i) {
    mask.tissue[i] = gray[i] < threshold ? 1 : 0;
  }
  return mask;
}

RoiMaskPredicate::RoiMaskPredicate(const TissueMask& mask)
    : all_(false),
      level_(mask.level),
      height_(mask.height),
      width_(mask.width),
      tissue_(mask.tissue) {}

bool RoiMaskPredicate::operator()(std::int64_t y, std::int64_t x, std::int64_t side) const {
  if (all_) return true;
  const std::int64_t scale = std::int64_t{1} << level_;
  // Covering rectangle in mask coordinates; any intersecting cell counts.
  std::int64_t my0 = y >= 0 ? y / scale : 0;
  std::int64_t mx0 = x >= 0 ? x / scale : 0;
  std::int64_t my1 = (y + side + scale - 1) / scale;
  std::int64_t mx1 = (x + side + scale - 1) / scale;
  my0 = std::clamp<std::int64_t>(my0, 0, height_);
  mx0 = std::clamp<std::int64_t>(mx0, 0, width_);
  my1 = std::clamp<std::int64_t>(my1, 0, height_);
  mx1 = std::clamp<std::int64_t>(mx1, 0, width_);
  for (std::int64_t my = my0; my < my1; ++my) {
    const std::uint8_t* row = tissue_.data() + my * width_;
    for (std::int64_t mx = mx0; mx < mx1; ++mx) {
      if (row[mx]) return true;
    }
  }
  return false;
}

RoiMaskPredicate map_mask_to_level0(const TissueMask& mask) { return RoiMaskPredicate(mask); }

void save_mask(const TissueMask& mask, const std::filesystem::path& png_path) {
  ImageGray img(mask.width, mask.height);
  for (std::size_t i = 0; i < mask.tissue.size(); ++i) img.pixels[i] = mask.tissue[i] ? 255 : 0;
  write_png(png_path, img);

  nlohmann::json j{{"mask_level", mask.level}, {"degenerate", mask.degenerate}};
  auto sidecar = png_path;
  sidecar.replace_extension(".json");
  std::ofstream out(sidecar);
  if (!out) throw IoError("cannot write mask sidecar " + sidecar.string());
  out << j.dump(2) << "\n";
}

TissueMask load_mask(const std::filesystem::path& png_path) {
  ImageGray img = read_png_gray(png_path);
  auto sidecar = png_path;
  sidecar.replace_extension(".json");
  std::ifstream in(sidecar);
  if (!in) throw IoError("cannot open mask sidecar " + sidecar.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed mask sidecar: " + std::string(e.what()));
  }

  TissueMask mask;
  mask.level = j.at("mask_level").get<int>();
  mask.degenerate = j.value("degenerate", false);
  mask.height = img.height;
  mask.width = img.width;
  mask.tissue.resize(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) mask.tissue[i] = img.pixels[i] >= 128 ? 1 : 0;
  return mask;
}

}  // namespace densescan
