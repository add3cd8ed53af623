#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "densescan/annotations.hpp"
#include "densescan/postproc.hpp"

namespace densescan {

struct FrocPoint {
  double avg_fp = 0;       // false positives per slide
  double sensitivity = 0;  // hit lesions / total lesions
};

struct FrocResult {
  static constexpr std::array<double, 6> kTargetRates{0.25, 0.5, 1.0, 2.0, 4.0, 8.0};

  std::vector<FrocPoint> curve;  // one point per distinct avg_fp, max sensitivity
  std::array<double, 6> sensitivity_at_rate{};
  double score = 0;  // mean of sensitivity_at_rate
  std::size_t total_lesions = 0;
  std::size_t slide_count = 0;
};

// Threshold sweep over the distinct detection scores. A lesion is hit iff a
// detection at or above the threshold lies inside its polygon (boundary
// inclusive); detections inside no polygon are false positives. Sensitivity
// at each target rate is the best sensitivity among curve points with
// avg_fp <= rate (0 when none). Throws UnknownSlideError for detections on
// slides absent from the annotation list.
FrocResult froc(const std::vector<Detection>& detections,
                const std::vector<LesionAnnotation>& annotations);

struct RocResult {
  std::vector<std::pair<double, double>> curve;  // (fpr, tpr)
  double auc = 0;
};

// Trapezoidal AUC == Mann-Whitney statistic with ties counting 1/2.
// labels: 1 = tumor, 0 = normal. Throws SingleClassError unless both classes
// are present.
RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// CSV headers: "avg_fp,sensitivity" / "fpr,tpr"; the SVG is a simple line
// plot of the same points.
void export_curve_csv(const FrocResult& result, const std::filesystem::path& path);
void export_curve_csv(const RocResult& result, const std::filesystem::path& path);
void export_curve_svg(const FrocResult& result, const std::filesystem::path& path);
void export_curve_svg(const RocResult& result, const std::filesystem::path& path);

}  // namespace densescan
