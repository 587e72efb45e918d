#pragma once

#include <vector>

#include <json.hpp>

#include "siamapn/bbox.hpp"

namespace siamapn {

struct OpeResult {
  double precision_at_20 = 0.0;
  std::vector<double> precision_thresholds;  // CLE 0..50 px
  std::vector<double> precision_curve;       // fraction with CLE < threshold
  double success_auc = 0.0;
  std::vector<double> success_thresholds;  // IoU 0, 0.05, ..., 1
  std::vector<double> success_curve;       // fraction with IoU >= threshold
};

/// One-pass evaluation. Throws std::invalid_argument on empty or unequal lists.
OpeResult eval_ope(const std::vector<BBox>& pred, const std::vector<BBox>& gt);

nlohmann::json to_json(const OpeResult& r);

}  // namespace siamapn
