#include "densescan/annotations.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "densescan/errors.hpp"
#include "json.hpp"

namespace densescan {
namespace {

bool on_segment(double px, double py, double ax, double ay, double bx, double by) {
  const double cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
  if (std::abs(cross) > 1e-9 * (std::abs(bx - ax) + std::abs(by - ay) + 1.0)) return false;
  return px >= std::min(ax, bx) - 1e-12 && px <= std::max(ax, bx) + 1e-12 &&
         py >= std::min(ay, by) - 1e-12 && py <= std::max(ay, by) + 1e-12;
}

}  // namespace

bool point_in_polygon(const Polygon& poly, double x, double y) {
  const auto& pts = poly.points;
  const std::size_t n = pts.size();
  if (n < 3) return false;

  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = pts[i];
    const auto& b = pts[(i + 1) % n];
    if (on_segment(x, y, a[0], a[1], b[0], b[1])) return true;  // boundary counts as inside
  }

  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const double xi = pts[i][0], yi = pts[i][1];
    const double xj = pts[j][0], yj = pts[j][1];
    if ((yi > y) != (yj > y)) {
      const double t = (y - yi) / (yj - yi);
      if (x < xi + t * (xj - xi)) inside = !inside;
    }
  }
  return inside;
}

bool point_in_any_polygon(const std::vector<Polygon>& polys, double x, double y) {
  for (const auto& p : polys) {
    if (point_in_polygon(p, x, y)) return true;
  }
  return false;
}

namespace {

bool segments_intersect(double ax, double ay, double bx, double by, double cx, double cy, double dx,
                        double dy) {
  auto orient = [](double ox, double oy, double px, double py, double qx, double qy) {
    const double v = (px - ox) * (qy - oy) - (py - oy) * (qx - ox);
    if (v > 1e-12) return 1;
    if (v < -1e-12) return -1;
    return 0;
  };
  const int o1 = orient(ax, ay, bx, by, cx, cy);
  const int o2 = orient(ax, ay, bx, by, dx, dy);
  const int o3 = orient(cx, cy, dx, dy, ax, ay);
  const int o4 = orient(cx, cy, dx, dy, bx, by);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(cx, cy, ax, ay, bx, by)) return true;
  if (o2 == 0 && on_segment(dx, dy, ax, ay, bx, by)) return true;
  if (o3 == 0 && on_segment(ax, ay, cx, cy, dx, dy)) return true;
  if (o4 == 0 && on_segment(bx, by, cx, cy, dx, dy)) return true;
  return false;
}

}  // namespace

bool polygon_intersects_rect(const Polygon& poly, double x0, double y0, double x1, double y1) {
  if (poly.points.size() < 3) return false;
  // Any vertex inside the rect, rect corner inside the polygon, or an edge
  // crossing a rect side.
  for (const auto& p : poly.points) {
    if (p[0] >= x0 && p[0] <= x1 && p[1] >= y0 && p[1] <= y1) return true;
  }
  if (point_in_polygon(poly, x0, y0) || point_in_polygon(poly, x1, y0) ||
      point_in_polygon(poly, x0, y1) || point_in_polygon(poly, x1, y1)) {
    return true;
  }
  const double rect[4][4] = {{x0, y0, x1, y0}, {x1, y0, x1, y1}, {x1, y1, x0, y1}, {x0, y1, x0, y0}};
  const auto& pts = poly.points;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& a = pts[i];
    const auto& b = pts[(i + 1) % pts.size()];
    for (const auto& r : rect) {
      if (segments_intersect(a[0], a[1], b[0], b[1], r[0], r[1], r[2], r[3])) return true;
    }
  }
  return false;
}

LesionAnnotation load_annotation(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotation " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed annotation " + path.string() + ": " + e.what());
  }

  LesionAnnotation ann;
  ann.slide_id = j.at("slide_id").get<std::string>();
  for (const auto& jp : j.at("polygons")) {
    Polygon poly;
    for (const auto& pt : jp) {
      poly.points.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
    }
    ann.polygons.push_back(std::move(poly));
  }
  return ann;
}

void save_annotation(const LesionAnnotation& ann, const std::filesystem::path& path) {
  nlohmann::json polys = nlohmann::json::array();
  for (const auto& poly : ann.polygons) {
    nlohmann::json jp = nlohmann::json::array();
    for (const auto& pt : poly.points) jp.push_back({pt[0], pt[1]});
    polys.push_back(jp);
  }
  nlohmann::json j{{"slide_id", ann.slide_id}, {"polygons", polys}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write annotation " + path.string());
  out << j.dump() << "\n";
}

}  // namespace densescan
