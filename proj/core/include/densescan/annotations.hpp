#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace densescan {

// Closed polygon in level-0 coordinates (x, y), vertices in order.
struct Polygon {
  std::vector<std::array<double, 2>> points;
};

struct LesionAnnotation {
  std::string slide_id;
  std::vector<Polygon> polygons;  // empty for normal slides

  bool tumor() const { return !polygons.empty(); }
};

// Boundary-inclusive point membership (even-odd rule; points on an edge
// count as inside).
bool point_in_polygon(const Polygon& poly, double x, double y);
bool point_in_any_polygon(const std::vector<Polygon>& polys, double x, double y);

// True when the axis-aligned rectangle [x0,x1] x [y0,y1] intersects the
// polygon (edges touching count).
bool polygon_intersects_rect(const Polygon& poly, double x0, double y0, double x1, double y1);

// {slide_id, polygons: [[[x,y],...], ...]}
LesionAnnotation load_annotation(const std::filesystem::path& path);
void save_annotation(const LesionAnnotation& ann, const std::filesystem::path& path);

}  // namespace densescan
