#include "densescan/postproc.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "densescan/errors.hpp"
#include "densescan/geometry.hpp"

namespace densescan {

BinaryMap binarize(const ProbabilityMap& map, double threshold) {
  if (threshold <= 0.0 || threshold >= 1.0) throw RangeError("threshold must be in (0,1)");
  BinaryMap out;
  out.height = map.height;
  out.width = map.width;
  out.v.resize(map.p.size());
  for (std::size_t i = 0; i < map.p.size(); ++i) {
    out.v[i] = (map.covered[i] && map.p[i] >= threshold) ? 1 : 0;
  }
  return out;
}

namespace {

BinaryMap erode(const BinaryMap& m, int r) {
  BinaryMap out;
  out.height = m.height;
  out.width = m.width;
  out.v.assign(m.v.size(), 0);
  for (std::int64_t y = 0; y < m.height; ++y) {
    for (std::int64_t x = 0; x < m.width; ++x) {
      bool keep = true;
      for (std::int64_t dy = -r; keep && dy <= r; ++dy) {
        const std::int64_t yy = y + dy;
        if (yy < 0 || yy >= m.height) {
          keep = false;
          break;
        }
        for (std::int64_t dx = -r; dx <= r; ++dx) {
          const std::int64_t xx = x + dx;
          if (xx < 0 || xx >= m.width || !m.at(yy, xx)) {
            keep = false;
            break;
          }
        }
      }
      if (keep) out.set(y, x, true);
    }
  }
  return out;
}

BinaryMap dilate(const BinaryMap& m, int r) {
  BinaryMap out;
  out.height = m.height;
  out.width = m.width;
  out.v.assign(m.v.size(), 0);
  for (std::int64_t y = 0; y < m.height; ++y) {
    for (std::int64_t x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      const std::int64_t y0 = std::max<std::int64_t>(0, y - r);
      const std::int64_t y1 = std::min<std::int64_t>(m.height - 1, y + r);
      const std::int64_t x0 = std::max<std::int64_t>(0, x - r);
      const std::int64_t x1 = std::min<std::int64_t>(m.width - 1, x + r);
      for (std::int64_t yy = y0; yy <= y1; ++yy) {
        for (std::int64_t xx = x0; xx <= x1; ++xx) out.set(yy, xx, true);
      }
    }
  }
  return out;
}

}  // namespace

BinaryMap morph_open(const BinaryMap& mask, int radius) {
  if (radius < 0) throw RangeError("opening radius must be >= 0");
  if (radius == 0) return mask;
  return dilate(erode(mask, radius), radius);
}

LabelGrid connected_components(const BinaryMap& mask) {
  LabelGrid grid;
  grid.height = mask.height;
  grid.width = mask.width;
  grid.label.assign(mask.v.size(), 0);

  std::vector<std::pair<std::int64_t, std::int64_t>> stack;
  for (std::int64_t y = 0; y < mask.height; ++y) {
    for (std::int64_t x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x) || grid.at(y, x) != 0) continue;
      const std::int32_t id = ++grid.count;
      stack.clear();
      stack.emplace_back(y, x);
      grid.label[y * mask.width + x] = id;
      while (!stack.empty()) {
        auto [cy, cx] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dy == 0 && dx == 0) continue;
            const std::int64_t ny = cy + dy, nx = cx + dx;
            if (ny < 0 || ny >= mask.height || nx < 0 || nx >= mask.width) continue;
            if (!mask.at(ny, nx) || grid.at(ny, nx) != 0) continue;
            grid.label[ny * mask.width + nx] = id;
            stack.emplace_back(ny, nx);
          }
        }
      }
    }
  }
  return grid;
}

std::vector<Detection> extract_detections(const ProbabilityMap& map, const LabelGrid& regions) {
  if (regions.height != map.height || regions.width != map.width) {
    throw ShapeError("label grid dims do not match the probability map");
  }
  struct Best {
    float score = -1.0f;
    std::int64_t y = 0, x = 0;
  };
  std::vector<Best> best(static_cast<std::size_t>(regions.count) + 1);
  for (std::int64_t y = 0; y < map.height; ++y) {
    for (std::int64_t x = 0; x < map.width; ++x) {
      const std::int32_t id = regions.at(y, x);
      if (id == 0) continue;
      const float v = map.at(y, x);
      if (v > best[id].score) best[id] = {v, y, x};  // scan order keeps the smallest (y,x) on ties
    }
  }

  std::vector<Detection> dets;
  dets.reserve(regions.count);
  for (int id = 1; id <= regions.count; ++id) {
    Detection d;
    d.slide_id = map.slide_id;
    d.component = id;
    d.score = best[id].score;
    d.y = map_prob_to_slide(best[id].y, map.geometry);
    d.x = map_prob_to_slide(best[id].x, map.geometry);
    dets.push_back(d);
  }
  return dets;
}

double slide_score(const ProbabilityMap& map) {
  float best = 0.0f;
  bool any = false;
  for (std::size_t i = 0; i < map.p.size(); ++i) {
    if (!map.covered[i]) continue;
    if (!any || map.p[i] > best) best = map.p[i];
    any = true;
  }
  return any ? best : 0.0;
}

void write_detections_csv(const std::filesystem::path& path, const std::vector<Detection>& dets) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write detections CSV " + path.string());
  out << "slide_id,x,y,score\n";
  char buf[64];
  for (const auto& d : dets) {
    std::snprintf(buf, sizeof(buf), "%.6f", d.score);
    out << d.slide_id << ',' << d.x << ',' << d.y << ',' << buf << '\n';
  }
  if (!out) throw IoError("failed writing detections CSV " + path.string());
}

std::vector<Detection> read_detections_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open detections CSV " + path.string());
  std::vector<Detection> dets;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first && line.rfind("slide_id", 0) == 0) {
      first = false;
      continue;
    }
    first = false;
    std::stringstream ss(line);
    std::string id, xs, ys, score;
    if (!std::getline(ss, id, ',') || !std::getline(ss, xs, ',') || !std::getline(ss, ys, ',') ||
        !std::getline(ss, score, ',')) {
      throw FormatError("bad detections CSV row: " + line);
    }
    Detection d;
    d.slide_id = id;
    d.x = std::stoll(xs);
    d.y = std::stoll(ys);
    d.score = std::stod(score);
    dets.push_back(std::move(d));
  }
  return dets;
}

void write_slide_scores_csv(const std::filesystem::path& path,
                            const std::vector<std::pair<std::string, double>>& scores) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write slide scores CSV " + path.string());
  out << "slide_id,score\n";
  char buf[64];
  for (const auto& [id, s] : scores) {
    std::snprintf(buf, sizeof(buf), "%.6f", s);
    out << id << ',' << buf << '\n';
  }
}

std::vector<std::pair<std::string, double>> read_slide_scores_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open slide scores CSV " + path.string());
  std::vector<std::pair<std::string, double>> scores;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first && line.rfind("slide_id", 0) == 0) {
      first = false;
      continue;
    }
    first = false;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("bad slide scores row: " + line);
    scores.emplace_back(line.substr(0, comma), std::stod(line.substr(comma + 1)));
  }
  return scores;
}

}  // namespace densescan
