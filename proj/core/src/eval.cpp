#include "densescan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "densescan/errors.hpp"

namespace densescan {

FrocResult froc(const std::vector<Detection>& detections,
                const std::vector<LesionAnnotation>& annotations) {
  std::map<std::string, const LesionAnnotation*> by_slide;
  std::size_t total_lesions = 0;
  for (const auto& ann : annotations) {
    by_slide[ann.slide_id] = &ann;
    total_lesions += ann.polygons.size();
  }

  // Resolve each detection once: the lesion containing it, or a false positive.
  struct Resolved {
    double score;
    int lesion = -1;  // global lesion id, -1 = FP
  };
  std::map<std::string, std::size_t> lesion_base;
  {
    std::size_t base = 0;
    for (const auto& ann : annotations) {
      lesion_base[ann.slide_id] = base;
      base += ann.polygons.size();
    }
  }

  std::vector<Resolved> resolved;
  resolved.reserve(detections.size());
  for (const auto& d : detections) {
    auto it = by_slide.find(d.slide_id);
    if (it == by_slide.end()) {
      throw UnknownSlideError("detection references unknown slide '" + d.slide_id + "'");
    }
    Resolved r{d.score, -1};
    const auto& polys = it->second->polygons;
    for (std::size_t k = 0; k < polys.size(); ++k) {
      if (point_in_polygon(polys[k], static_cast<double>(d.x), static_cast<double>(d.y))) {
        r.lesion = static_cast<int>(lesion_base[d.slide_id] + k);
        break;  // a detection hits only the polygon containing it
      }
    }
    resolved.push_back(r);
  }

  std::sort(resolved.begin(), resolved.end(),
            [](const Resolved& a, const Resolved& b) { return a.score > b.score; });

  FrocResult result;
  result.total_lesions = total_lesions;
  result.slide_count = annotations.size();
  if (annotations.empty()) throw UnknownSlideError("froc needs at least one annotated slide");

  std::vector<char> hit(total_lesions, 0);
  std::size_t hits = 0, fps = 0;
  std::vector<FrocPoint> raw;
  std::size_t i = 0;
  while (i < resolved.size()) {
    const double t = resolved[i].score;
    for (; i < resolved.size() && resolved[i].score == t; ++i) {
      if (resolved[i].lesion >= 0) {
        if (!hit[resolved[i].lesion]) {
          hit[resolved[i].lesion] = 1;
          hits++;
        }
      } else {
        fps++;
      }
    }
    FrocPoint pt;
    pt.avg_fp = static_cast<double>(fps) / static_cast<double>(result.slide_count);
    pt.sensitivity =
        total_lesions == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total_lesions);
    raw.push_back(pt);
  }

  // Collapse equal-avg_fp points to their best sensitivity (the sweep is
  // monotone, so the last point at each avg_fp wins).
  for (const auto& pt : raw) {
    if (!result.curve.empty() && result.curve.back().avg_fp == pt.avg_fp) {
      result.curve.back().sensitivity = std::max(result.curve.back().sensitivity, pt.sensitivity);
    } else {
      result.curve.push_back(pt);
    }
  }

  for (std::size_t r = 0; r < FrocResult::kTargetRates.size(); ++r) {
    double best = 0.0;
    for (const auto& pt : result.curve) {
      if (pt.avg_fp <= FrocResult::kTargetRates[r]) best = std::max(best, pt.sensitivity);
    }
    result.sensitivity_at_rate[r] = best;
    result.score += best;
  }
  result.score /= static_cast<double>(FrocResult::kTargetRates.size());
  return result;
}

RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw RangeError("scores and labels differ in length");
  std::size_t n_pos = 0, n_neg = 0;
  for (int l : labels) (l ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0) {
    throw SingleClassError("AUC needs at least one slide of each class");
  }

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Mann-Whitney via average ranks over tie groups.
  double rank_sum_pos = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) j++;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) rank_sum_pos += avg_rank;
    }
    i = j;
  }

  RocResult result;
  result.auc = (rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1)) /
               (static_cast<double>(n_pos) * static_cast<double>(n_neg));

  // ROC points from high threshold to low, grouping tied scores.
  result.curve.push_back({0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  i = order.size();
  while (i > 0) {
    std::size_t j = i;
    const double t = scores[order[i - 1]];
    while (j > 0 && scores[order[j - 1]] == t) {
      if (labels[order[j - 1]]) tp++; else fp++;
      j--;
    }
    i = j;
    result.curve.push_back({static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos});
  }
  return result;
}

namespace {

void write_svg(const std::filesystem::path& path, const std::vector<std::pair<double, double>>& pts,
               const std::string& x_label, const std::string& y_label, double x_max) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write SVG " + path.string());
  const int W = 640, H = 480, M = 56;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << M << "\" y1=\"" << H - M << "\" x2=\"" << W - M / 2 << "\" y2=\"" << H - M
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << M << "\" y1=\"" << H - M << "\" x2=\"" << M << "\" y2=\"" << M / 2
      << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"14\">"
      << x_label << "</text>\n";
  out << "<text x=\"16\" y=\"" << H / 2
      << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 16 " << H / 2 << ")\">"
      << y_label << "</text>\n";
  if (x_max <= 0) x_max = 1.0;
  out << "<polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\" points=\"";
  for (const auto& [x, y] : pts) {
    const double px = M + (W - 1.5 * M) * std::min(1.0, x / x_max);
    const double py = (H - M) - (H - 1.5 * M) * std::min(1.0, y);
    out << px << "," << py << " ";
  }
  out << "\"/>\n</svg>\n";
  if (!out) throw IoError("failed writing SVG " + path.string());
}

}  // namespace

void export_curve_csv(const FrocResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write curve CSV " + path.string());
  out << "avg_fp,sensitivity\n";
  for (const auto& pt : result.curve) out << pt.avg_fp << ',' << pt.sensitivity << '\n';
  if (!out) throw IoError("failed writing curve CSV " + path.string());
}

void export_curve_csv(const RocResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write curve CSV " + path.string());
  out << "fpr,tpr\n";
  for (const auto& [fpr, tpr] : result.curve) out << fpr << ',' << tpr << '\n';
  if (!out) throw IoError("failed writing curve CSV " + path.string());
}

void export_curve_svg(const FrocResult& result, const std::filesystem::path& path) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& pt : result.curve) pts.push_back({pt.avg_fp, pt.sensitivity});
  write_svg(path, pts, "average false positives per slide", "sensitivity", 8.0);
}

void export_curve_svg(const RocResult& result, const std::filesystem::path& path) {
  write_svg(path, result.curve, "false positive rate", "true positive rate", 1.0);
}

}  // namespace densescan
