#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "densescan/reconstruct.hpp"

namespace densescan {

struct BinaryMap {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::uint8_t> v;  // 0/1

  bool at(std::int64_t y, std::int64_t x) const { return v[y * width + x] != 0; }
  void set(std::int64_t y, std::int64_t x, bool b) { v[y * width + x] = b ? 1 : 0; }
};

// Cell is true iff covered and probability >= threshold.
BinaryMap binarize(const ProbabilityMap& map, double threshold = 0.5);

// Erosion then dilation with a square (2r+1)^2 structuring element; cells
// outside the grid count as false. r=0 is the identity.
BinaryMap morph_open(const BinaryMap& mask, int radius);

struct LabelGrid {
  std::int64_t height = 0;
  std::int64_t width = 0;
  int count = 0;                    // number of components
  std::vector<std::int32_t> label;  // 0 = background, 1..count

  std::int32_t at(std::int64_t y, std::int64_t x) const { return label[y * width + x]; }
};

// 8-connectivity labeling.
LabelGrid connected_components(const BinaryMap& mask);

struct Detection {
  std::string slide_id;
  std::int64_t x = 0;  // level-0 coords of the component's argmax cell center
  std::int64_t y = 0;
  double score = 0;    // max probability within the component
  int component = 0;
};

// One detection per component; ties on the max go to the smallest row, then
// column. Coordinates map through the patch-center anchor.
std::vector<Detection> extract_detections(const ProbabilityMap& map, const LabelGrid& regions);

// Max probability over covered cells; 0 when nothing was covered.
double slide_score(const ProbabilityMap& map);

// CSV "slide_id,x,y,score" with integer level-0 coords and 6-decimal scores.
void write_detections_csv(const std::filesystem::path& path, const std::vector<Detection>& dets);
std::vector<Detection> read_detections_csv(const std::filesystem::path& path);

void write_slide_scores_csv(const std::filesystem::path& path,
                            const std::vector<std::pair<std::string, double>>& scores);
std::vector<std::pair<std::string, double>> read_slide_scores_csv(
    const std::filesystem::path& path);

}  // namespace densescan
