#include "siamapn/metrics.hpp"

#include <stdexcept>

namespace siamapn {

namespace {

constexpr int kMaxCle = 50;
constexpr int kIouSteps = 20;

double fraction(std::size_t count, std::size_t total) {
  return static_cast<double>(count) / static_cast<double>(total);
}

}  // namespace

OpeResult eval_ope(const std::vector<BBox>& pred, const std::vector<BBox>& gt) {
  if (pred.empty() || gt.empty()) throw std::invalid_argument("eval_ope: empty box list");
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("eval_ope: " + std::to_string(pred.size()) + " predictions vs " +
                                std::to_string(gt.size()) + " ground-truth boxes");
  }
  const std::size_t n = pred.size();
  std::vector<double> cle(n), overlap(n);
  for (std::size_t i = 0; i < n; ++i) {
    cle[i] = center_error(pred[i], gt[i]);
    overlap[i] = iou(pred[i], gt[i]);
  }

  OpeResult r;
  for (int t = 0; t <= kMaxCle; ++t) {
    const double thr = t;
    std::size_t hit = 0;
    for (double e : cle) hit += e < thr;
    r.precision_thresholds.push_back(thr);
    r.precision_curve.push_back(fraction(hit, n));
  }
  r.precision_at_20 = r.precision_curve[20];

  double auc = 0.0;
  for (int k = 0; k <= kIouSteps; ++k) {
    const double thr = static_cast<double>(k) / kIouSteps;
    std::size_t hit = 0;
    for (double u : overlap) hit += u >= thr;
    r.success_thresholds.push_back(thr);
    r.success_curve.push_back(fraction(hit, n));
    auc += r.success_curve.back();
  }
  r.success_auc = auc / (kIouSteps + 1);
  return r;
}

nlohmann::json to_json(const OpeResult& r) {
  return nlohmann::json{{"precision_at_20", r.precision_at_20},
                        {"success_auc", r.success_auc},
                        {"precision_thresholds", r.precision_thresholds},
                        {"precision_curve", r.precision_curve},
                        {"success_thresholds", r.success_thresholds},
                        {"success_curve", r.success_curve}};
}

}  // namespace siamapn
