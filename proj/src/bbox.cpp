#include "siamapn/bbox.hpp"

#include <algorithm>
#include <cmath>

namespace siamapn {

double iou(const BBox& a, const BBox& b) {
  const double iw = std::max(0.0, std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0()));
  const double ih = std::max(0.0, std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0()));
  const double inter = iw * ih;
  // Areas from the same corner arithmetic, so identical boxes give exactly 1.
  const double area_a = (a.x1() - a.x0()) * (a.y1() - a.y0());
  const double area_b = (b.x1() - b.x0()) * (b.y1() - b.y0());
  const double uni = area_a + area_b - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double center_error(const BBox& a, const BBox& b) { return std::hypot(a.cx - b.cx, a.cy - b.cy); }

}  // namespace siamapn
