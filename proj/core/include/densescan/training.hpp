#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "densescan/annotations.hpp"
#include "densescan/geometry.hpp"
#include "densescan/pipeline.hpp"
#include "densescan/preproc.hpp"
#include "densescan/scorer.hpp"
#include "densescan/slide.hpp"

namespace densescan {

enum class PatchLabel { normal = 0, tumor = 1 };
enum class SampleRound { initial, hnm };

struct PatchSample {
  ImageRGB patch;
  PatchLabel label = PatchLabel::normal;
  std::string slide_id;
  std::int64_t y0 = 0;  // level-0 top-left of the patch
  std::int64_t x0 = 0;
  SampleRound round = SampleRound::initial;
};

struct AugmentParams {
  int rotation_quarters = 0;  // 0..3
  bool flip_h = false;
  bool flip_v = false;
  double scale = 1.0;  // >= 1; bilinear resample then center-crop
  int jitter_y = 0;    // pixels, edge-replicated
  int jitter_x = 0;
  std::array<int, 3> color_shift{0, 0, 0};  // additive, clamped
};

struct AugmentConfig {
  bool rotate = true;
  bool flip = true;
  double max_scale = 1.15;
  int max_jitter = 2;
  int max_color_shift = 10;
};

// Output side equals input side for every parameter combination.
ImageRGB augment(const ImageRGB& patch, const AugmentParams& params);
AugmentParams sample_augment_params(const AugmentConfig& config, std::uint64_t stream_seed);

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.0;
  int batch_size = 32;
  int epochs = 12;
  std::uint64_t seed = 1;
  int hnm_rounds = 1;
  double hnm_threshold = 0.5;       // theta_hnm
  int hnm_cap_per_slide = 200;
  int samples_pos_per_slide = 64;   // initial sampling density
  int samples_neg_per_slide = 64;
  AugmentConfig augment;
  PipelineConfig pipeline;          // prefetch settings; consumption is always ordered
};

// A slide with everything sampling needs. annotation may be null for normal
// slides; mask may be null to treat the whole slide as tissue.
struct TrainSlide {
  const SlidePyramid* slide = nullptr;
  const LesionAnnotation* annotation = nullptr;
  const TissueMask* mask = nullptr;
};

// Draws n_pos tumor-centered and n_neg tissue-centered patches from each
// slide. Negative patch rectangles never intersect a tumor polygon (margin of
// half a patch around the center). Reproducible given the seed. Throws
// InsufficientRegionError when a slide cannot supply the requested counts.
std::vector<PatchSample> sample_patches(const std::vector<TrainSlide>& slides, int n_pos,
                                        int n_neg, int patch_side, std::uint64_t seed);

struct TrainResult {
  ConvNet net;
  std::vector<double> epoch_loss;
};

// Mini-batch SGD on softmax cross-entropy with class-balanced batches.
// Deterministic given the seed: augmentation streams are keyed by sequence
// index and batches are consumed in order no matter how many producers run.
// Throws DivergenceError if the loss leaves the finite range.
TrainResult train_scorer(const std::vector<PatchSample>& samples, const ConvNet& template_net,
                         const TrainConfig& config);

// Scans each (tumor-free) slide and harvests patches at covered map cells
// with probability >= threshold, labeled normal, at most cap per slide by
// descending score. When an annotation is supplied, patches touching a tumor
// polygon are excluded.
std::vector<PatchSample> mine_hard_negatives(const ConvNet& net,
                                             const std::vector<TrainSlide>& slides,
                                             const ScanGeometry& geometry, double threshold,
                                             int cap_per_slide,
                                             const PipelineConfig& pipeline = {});

struct HnmRoundMetrics {
  int round = 0;
  std::size_t mined = 0;
  std::size_t training_samples = 0;
  double final_loss = 0;
  std::optional<double> validation_froc;
};

struct HnmResult {
  ConvNet net;
  std::vector<PatchSample> samples;  // initial + everything mined
  std::vector<HnmRoundMetrics> rounds;
};

// Alternates train_scorer and mine_hard_negatives for config.hnm_rounds
// rounds, retraining from scratch on the grown sample set. 0 rounds is
// exactly train_scorer. The optional validate callback is invoked on each
// round's weights (e.g. a held-out FROC).
HnmResult hnm_rounds(std::vector<PatchSample> initial_samples,
                     const std::vector<TrainSlide>& normal_slides, const ConvNet& template_net,
                     const ScanGeometry& geometry, const TrainConfig& config,
                     const std::function<double(const ConvNet&)>& validate = {});

}  // namespace densescan
