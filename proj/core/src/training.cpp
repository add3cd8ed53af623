#include "densescan/training.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "densescan/errors.hpp"
#include "densescan/reconstruct.hpp"
#include "densescan/rng.hpp"

namespace densescan {

// ---------------------------------------------------------------------------
// Augmentation

namespace {

ImageRGB rotate90(const ImageRGB& img, int quarters) {
  quarters = ((quarters % 4) + 4) % 4;
  if (quarters == 0) return img;
  ImageRGB out = (quarters == 2) ? ImageRGB(img.width, img.height) : ImageRGB(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      int ny = 0, nx = 0;
      switch (quarters) {
        case 1:  // 90 degrees clockwise
          ny = x;
          nx = img.height - 1 - y;
          break;
        case 2:
          ny = img.height - 1 - y;
          nx = img.width - 1 - x;
          break;
        default:  // 270
          ny = img.width - 1 - x;
          nx = y;
          break;
      }
      std::copy_n(img.at(y, x), 3, out.at(ny, nx));
    }
  }
  return out;
}

ImageRGB flip(const ImageRGB& img, bool horizontal, bool vertical) {
  if (!horizontal && !vertical) return img;
  ImageRGB out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    const int sy = vertical ? img.height - 1 - y : y;
    for (int x = 0; x < img.width; ++x) {
      const int sx = horizontal ? img.width - 1 - x : x;
      std::copy_n(img.at(sy, sx), 3, out.at(y, x));
    }
  }
  return out;
}

ImageRGB scale_center_crop(const ImageRGB& img, double scale) {
  const int side = img.width;
  const int scaled = std::max(side, static_cast<int>(std::lround(side * scale)));
  if (scaled == side) return img;

  // Bilinear resample to `scaled`, then take the centered side x side window.
  ImageRGB out(side, side);
  const int off = (scaled - side) / 2;
  const double step = static_cast<double>(side - 1) / (scaled - 1);
  for (int y = 0; y < side; ++y) {
    const double sy = (y + off) * step;
    const int y0 = std::min(static_cast<int>(sy), side - 2);
    const double ty = sy - y0;
    for (int x = 0; x < side; ++x) {
      const double sx = (x + off) * step;
      const int x0 = std::min(static_cast<int>(sx), side - 2);
      const double tx = sx - x0;
      for (int c = 0; c < 3; ++c) {
        const double v00 = img.at(y0, x0)[c];
        const double v01 = img.at(y0, x0 + 1)[c];
        const double v10 = img.at(y0 + 1, x0)[c];
        const double v11 = img.at(y0 + 1, x0 + 1)[c];
        const double v = (v00 * (1 - tx) + v01 * tx) * (1 - ty) + (v10 * (1 - tx) + v11 * tx) * ty;
        out.at(y, x)[c] = static_cast<std::uint8_t>(std::clamp(v + 0.5, 0.0, 255.0));
      }
    }
  }
  return out;
}

ImageRGB translate_edge(const ImageRGB& img, int dy, int dx) {
  if (dy == 0 && dx == 0) return img;
  ImageRGB out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    const int sy = std::clamp(y + dy, 0, img.height - 1);
    for (int x = 0; x < img.width; ++x) {
      const int sx = std::clamp(x + dx, 0, img.width - 1);
      std::copy_n(img.at(sy, sx), 3, out.at(y, x));
    }
  }
  return out;
}

}  // namespace

ImageRGB augment(const ImageRGB& patch, const AugmentParams& params) {
  ImageRGB out = rotate90(patch, params.rotation_quarters);
  out = flip(out, params.flip_h, params.flip_v);
  out = scale_center_crop(out, params.scale);
  out = translate_edge(out, params.jitter_y, params.jitter_x);
  if (params.color_shift != std::array<int, 3>{0, 0, 0}) {
    for (std::size_t i = 0; i < out.pixels.size(); i += 3) {
      for (int c = 0; c < 3; ++c) {
        out.pixels[i + c] = static_cast<std::uint8_t>(
            std::clamp(static_cast<int>(out.pixels[i + c]) + params.color_shift[c], 0, 255));
      }
    }
  }
  return out;
}

AugmentParams sample_augment_params(const AugmentConfig& config, std::uint64_t stream_seed) {
  std::mt19937_64 rng(stream_seed);
  AugmentParams p;
  if (config.rotate) p.rotation_quarters = static_cast<int>(rng() % 4);
  if (config.flip) {
    p.flip_h = (rng() & 1) != 0;
    p.flip_v = (rng() & 1) != 0;
  }
  if (config.max_scale > 1.0) {
    std::uniform_real_distribution<double> s(1.0, config.max_scale);
    p.scale = s(rng);
  }
  if (config.max_jitter > 0) {
    std::uniform_int_distribution<int> j(-config.max_jitter, config.max_jitter);
    p.jitter_y = j(rng);
    p.jitter_x = j(rng);
  }
  if (config.max_color_shift > 0) {
    std::uniform_int_distribution<int> c(-config.max_color_shift, config.max_color_shift);
    for (int ch = 0; ch < 3; ++ch) p.color_shift[ch] = c(rng);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Sampling

namespace {

bool patch_clear_of_polygons(const std::vector<Polygon>& polys, double cy, double cx, int half) {
  for (const auto& poly : polys) {
    if (polygon_intersects_rect(poly, cx - half, cy - half, cx + half, cy + half)) return false;
  }
  return true;
}

ImageRGB extract_patch(const SlidePyramid& slide, std::int64_t y0, std::int64_t x0, int side) {
  return slide.fetch_region({0, y0, x0, side});
}

}  // namespace

std::vector<PatchSample> sample_patches(const std::vector<TrainSlide>& slides, int n_pos, int n_neg,
                                        int patch_side, std::uint64_t seed) {
  std::vector<PatchSample> out;
  const int half = patch_side / 2;

  for (std::size_t si = 0; si < slides.size(); ++si) {
    const TrainSlide& ts = slides[si];
    if (!ts.slide) throw RangeError("sample_patches: null slide");
    const auto& slide = *ts.slide;
    std::mt19937_64 rng(derive_seed(seed, si));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const std::vector<Polygon> no_polys;
    const std::vector<Polygon>& polys = ts.annotation ? ts.annotation->polygons : no_polys;

    if (n_pos > 0) {
      if (polys.empty()) {
        throw InsufficientRegionError("slide '" + slide.slide_id() + "' has no tumor polygons");
      }
      int produced = 0;
      long attempts = 0;
      const long max_attempts = 2000L * n_pos;
      while (produced < n_pos) {
        if (++attempts > max_attempts) {
          throw InsufficientRegionError("could not sample " + std::to_string(n_pos) +
                                        " positives from '" + slide.slide_id() + "'");
        }
        const auto& poly = polys[rng() % polys.size()];
        double x0 = poly.points[0][0], x1 = x0, y0 = poly.points[0][1], y1 = y0;
        for (const auto& pt : poly.points) {
          x0 = std::min(x0, pt[0]);
          x1 = std::max(x1, pt[0]);
          y0 = std::min(y0, pt[1]);
          y1 = std::max(y1, pt[1]);
        }
        const double cx = x0 + (x1 - x0) * unit(rng);
        const double cy = y0 + (y1 - y0) * unit(rng);
        if (!point_in_polygon(poly, cx, cy)) continue;

        PatchSample s;
        s.label = PatchLabel::tumor;
        s.slide_id = slide.slide_id();
        s.y0 = static_cast<std::int64_t>(std::llround(cy)) - half;
        s.x0 = static_cast<std::int64_t>(std::llround(cx)) - half;
        s.round = SampleRound::initial;
        s.patch = extract_patch(slide, s.y0, s.x0, patch_side);
        out.push_back(std::move(s));
        produced++;
      }
    }

    if (n_neg > 0) {
      RoiMaskPredicate tissue =
          ts.mask ? RoiMaskPredicate(*ts.mask) : RoiMaskPredicate();
      int produced = 0;
      long attempts = 0;
      const long max_attempts = 4000L * n_neg;
      while (produced < n_neg) {
        if (++attempts > max_attempts) {
          throw InsufficientRegionError("could not sample " + std::to_string(n_neg) +
                                        " negatives from '" + slide.slide_id() + "'");
        }
        const auto cy = static_cast<std::int64_t>(unit(rng) * slide.height0());
        const auto cx = static_cast<std::int64_t>(unit(rng) * slide.width0());
        if (!tissue(cy, cx, 1)) continue;
        if (!patch_clear_of_polygons(polys, static_cast<double>(cy), static_cast<double>(cx), half)) {
          continue;
        }

        PatchSample s;
        s.label = PatchLabel::normal;
        s.slide_id = slide.slide_id();
        s.y0 = cy - half;
        s.x0 = cx - half;
        s.round = SampleRound::initial;
        s.patch = extract_patch(slide, s.y0, s.x0, patch_side);
        out.push_back(std::move(s));
        produced++;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// SGD training

namespace {

struct Velocity {
  std::vector<ConvParams> conv;
};

void sgd_step(ConvNet& net, const NetGradients& grads, Velocity* velocity, double lr,
              double momentum, int batch_items) {
  const float scale = static_cast<float>(lr / batch_items);
  for (int li = 0; li < net.conv_layer_count(); ++li) {
    ConvParams& p = net.conv_params(li);
    const ConvParams& g = grads.conv[li];
    if (momentum > 0.0 && velocity) {
      ConvParams& v = velocity->conv[li];
      const float mu = static_cast<float>(momentum);
      for (std::size_t i = 0; i < p.weights.size(); ++i) {
        v.weights[i] = mu * v.weights[i] + scale * g.weights[i];
        p.weights[i] -= v.weights[i];
      }
      for (std::size_t i = 0; i < p.bias.size(); ++i) {
        v.bias[i] = mu * v.bias[i] + scale * g.bias[i];
        p.bias[i] -= v.bias[i];
      }
    } else {
      for (std::size_t i = 0; i < p.weights.size(); ++i) p.weights[i] -= scale * g.weights[i];
      for (std::size_t i = 0; i < p.bias.size(); ++i) p.bias[i] -= scale * g.bias[i];
    }
  }
}

}  // namespace

TrainResult train_scorer(const std::vector<PatchSample>& samples, const ConvNet& template_net,
                         const TrainConfig& config) {
  if (config.learning_rate < 0 || config.batch_size <= 0 || config.epochs < 0) {
    throw RangeError("invalid training hyperparameters");
  }
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (samples[i].label == PatchLabel::tumor ? pos : neg).push_back(i);
  }
  if (pos.empty() || neg.empty()) {
    throw InsufficientRegionError("training needs at least one sample of each class");
  }

  TrainResult result;
  result.net = template_net;
  result.net.init_random(config.seed);

  Velocity velocity;
  if (config.momentum > 0.0) {
    for (int li = 0; li < result.net.conv_layer_count(); ++li) {
      ConvParams v;
      v.weights.assign(result.net.conv_params(li).weights.size(), 0.0f);
      v.bias.assign(result.net.conv_params(li).bias.size(), 0.0f);
      velocity.conv.push_back(std::move(v));
    }
  }

  // Class-balanced epoch sequence: alternating positive/negative picks from
  // per-epoch shuffles, the smaller pool cycling.
  const std::size_t half_len = std::max(pos.size(), neg.size());
  const std::size_t epoch_len = 2 * half_len;

  NetGradients grads = result.net.make_gradients();
  int batch_items = 0;
  double epoch_loss_sum = 0;
  std::size_t epoch_loss_items = 0;

  PipelineConfig pipe = config.pipeline;
  pipe.deterministic = true;  // SGD consumes in sequence order, always

  auto flush_batch = [&](ConvNet& net) {
    if (batch_items == 0) return;
    sgd_step(net, grads, config.momentum > 0 ? &velocity : nullptr, config.learning_rate,
             config.momentum, batch_items);
    grads.zero();
    batch_items = 0;
  };

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(derive_seed(config.seed, 0xe90c ^ static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> pos_perm = pos, neg_perm = neg;
    std::shuffle(pos_perm.begin(), pos_perm.end(), shuffle_rng);
    std::shuffle(neg_perm.begin(), neg_perm.end(), shuffle_rng);

    auto sample_at = [&](std::size_t k) -> const PatchSample& {
      const std::size_t h = k / 2;
      return (k % 2 == 0) ? samples[pos_perm[h % pos_perm.size()]]
                          : samples[neg_perm[h % neg_perm.size()]];
    };

    epoch_loss_sum = 0;
    epoch_loss_items = 0;

    const std::uint64_t epoch_seed = derive_seed(config.seed, 0xa0 + static_cast<std::uint64_t>(epoch));
    run_pipeline(
        epoch_len,
        [&](std::size_t k) {
          const PatchSample& s = sample_at(k);
          const AugmentParams p = sample_augment_params(config.augment, derive_seed(epoch_seed, k));
          return std::pair<Tensor, int>(to_tensor(augment(s.patch, p)),
                                        s.label == PatchLabel::tumor ? 1 : 0);
        },
        [&](std::size_t, std::pair<Tensor, int>&& item) {
          ConvNet::ForwardCache cache;
          Tensor logits = result.net.forward_logits(item.first, &cache);
          const float zn = logits.at(0, 0, 0);
          const float zt = logits.at(1, 0, 0);
          const float m = std::max(zn, zt);
          const float lse = m + std::log(std::exp(zn - m) + std::exp(zt - m));
          const float loss = lse - (item.second == 1 ? zt : zn);
          if (!std::isfinite(loss)) throw DivergenceError("training loss is not finite");
          epoch_loss_sum += loss;
          epoch_loss_items++;

          const float pn = std::exp(zn - lse);
          const float pt = std::exp(zt - lse);
          Tensor dlogits(2, 1, 1);
          dlogits.at(0, 0, 0) = pn - (item.second == 0 ? 1.0f : 0.0f);
          dlogits.at(1, 0, 0) = pt - (item.second == 1 ? 1.0f : 0.0f);
          result.net.backward(cache, dlogits, grads);
          batch_items++;
          if (batch_items == config.batch_size) flush_batch(result.net);
        },
        pipe);
    flush_batch(result.net);
    result.epoch_loss.push_back(epoch_loss_items ? epoch_loss_sum / epoch_loss_items : 0.0);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Hard negative mining

std::vector<PatchSample> mine_hard_negatives(const ConvNet& net,
                                             const std::vector<TrainSlide>& slides,
                                             const ScanGeometry& geometry, double threshold,
                                             int cap_per_slide, const PipelineConfig& pipeline) {
  std::vector<PatchSample> mined;
  const int half = geometry.patch_side / 2;

  for (const TrainSlide& ts : slides) {
    if (!ts.slide) throw RangeError("mine_hard_negatives: null slide");
    const SlidePyramid& slide = *ts.slide;

    MaskFn mask;
    if (ts.mask) {
      RoiMaskPredicate pred(*ts.mask);
      mask = [pred](std::int64_t y, std::int64_t x, std::int64_t side) { return pred(y, x, side); };
    }
    ProbabilityMap map = scan_slide(slide, geometry, net, mask, pipeline);

    struct Candidate {
      float score;
      std::int64_t y, x;  // map cells
    };
    std::vector<Candidate> candidates;
    for (std::int64_t y = 0; y < map.height; ++y) {
      for (std::int64_t x = 0; x < map.width; ++x) {
        if (!map.is_covered(y, x)) continue;
        const float v = map.at(y, x);
        if (v >= threshold) candidates.push_back({v, y, x});
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.y != b.y) return a.y < b.y;
      return a.x < b.x;
    });

    const std::vector<Polygon> no_polys;
    const std::vector<Polygon>& polys = ts.annotation ? ts.annotation->polygons : no_polys;

    int taken = 0;
    for (const Candidate& c : candidates) {
      if (taken >= cap_per_slide) break;
      const std::int64_t y0 = c.y * geometry.dense_stride;
      const std::int64_t x0 = c.x * geometry.dense_stride;
      if (!polys.empty() &&
          !patch_clear_of_polygons(polys, static_cast<double>(y0 + half),
                                   static_cast<double>(x0 + half), half)) {
        continue;  // mined regions must exclude tumor
      }
      PatchSample s;
      s.label = PatchLabel::normal;
      s.slide_id = slide.slide_id();
      s.y0 = y0;
      s.x0 = x0;
      s.round = SampleRound::hnm;
      s.patch = slide.fetch_region({0, y0, x0, geometry.patch_side});
      mined.push_back(std::move(s));
      taken++;
    }
  }
  return mined;
}

HnmResult hnm_rounds(std::vector<PatchSample> initial_samples,
                     const std::vector<TrainSlide>& normal_slides, const ConvNet& template_net,
                     const ScanGeometry& geometry, const TrainConfig& config,
                     const std::function<double(const ConvNet&)>& validate) {
  HnmResult result;
  result.samples = std::move(initial_samples);

  TrainResult tr = train_scorer(result.samples, template_net, config);
  result.net = std::move(tr.net);

  HnmRoundMetrics m0;
  m0.round = 0;
  m0.mined = 0;
  m0.training_samples = result.samples.size();
  m0.final_loss = tr.epoch_loss.empty() ? 0.0 : tr.epoch_loss.back();
  if (validate) m0.validation_froc = validate(result.net);
  result.rounds.push_back(m0);

  for (int round = 1; round <= config.hnm_rounds; ++round) {
    std::vector<PatchSample> mined =
        mine_hard_negatives(result.net, normal_slides, geometry, config.hnm_threshold,
                            config.hnm_cap_per_slide, config.pipeline);

    HnmRoundMetrics m;
    m.round = round;
    m.mined = mined.size();

    if (!mined.empty()) {
      for (auto& s : mined) result.samples.push_back(std::move(s));
      // Retraining from scratch on the grown set keeps the run a pure
      // function of (seed, samples).
      TrainResult rt = train_scorer(result.samples, template_net, config);
      result.net = std::move(rt.net);
      m.final_loss = rt.epoch_loss.empty() ? 0.0 : rt.epoch_loss.back();
    } else {
      m.final_loss = result.rounds.back().final_loss;
    }
    m.training_samples = result.samples.size();
    if (validate) m.validation_froc = validate(result.net);
    result.rounds.push_back(m);
    if (m.mined == 0) break;  // nothing new to learn from
  }
  return result;
}

}  // namespace densescan
