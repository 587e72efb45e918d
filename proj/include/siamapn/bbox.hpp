#pragma once

#include <array>

namespace siamapn {

/// Axis-aligned box in pixel coordinates, center/size form. A pixel (i, j)
/// covers [j, j+1) x [i, i+1), so its center sits at (j + 0.5, i + 0.5).
struct BBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  double x0() const { return cx - 0.5 * w; }
  double y0() const { return cy - 0.5 * h; }
  double x1() const { return cx + 0.5 * w; }
  double y1() const { return cy + 0.5 * h; }
  double area() const { return w * h; }

  static BBox from_corners(double x0, double y0, double x1, double y1) {
    return {0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0};
  }
  /// Top-left / size form as used by ground-truth text files.
  static BBox from_xywh(double x, double y, double w, double h) {
    return {x + 0.5 * w, y + 0.5 * h, w, h};
  }
  std::array<double, 4> to_xywh() const { return {x0(), y0(), w, h}; }

  bool operator==(const BBox&) const = default;
};

/// Intersection over union; 0 when the union is empty.
double iou(const BBox& a, const BBox& b);

/// Center location error (Euclidean distance between centers).
double center_error(const BBox& a, const BBox& b);

}  // namespace siamapn
