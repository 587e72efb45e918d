#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "siamapn/apn.hpp"
#include "siamapn/bbox.hpp"
#include "siamapn/nn.hpp"
#include "siamapn/tensor.hpp"

namespace siamapn {

/// Branch weights and the IoU-loss shape parameter.
struct LossWeights {
  double w1 = 1.2;
  double w2 = 1.0;
  double w3 = 1.0;
  double alpha = 1.5;

  /// Throws std::invalid_argument unless w1..w3 > 0 and 1 < alpha <= 2.
  void validate() const;
};

struct LabelThresholds {
  double t_pos = 0.6;
  double t_neg = 0.3;
};

enum class AnchorLabel : std::int8_t { ignore = -1, negative = 0, positive = 1 };

/// Targets for one batch, flattened as [N, h, w].
struct LabelAssignment {
  std::size_t n = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<AnchorLabel> cls1;   // anchor IoU with the ground truth
  std::vector<std::uint8_t> cls2;  // 1 when the cell center lies inside the ground truth
  std::vector<double> cls3;        // centerness in [0, 1]
  std::vector<BBox> reg_target;    // ground truth for positive cells
  std::vector<bool> degenerate;    // per sample: zero-area ground truth

  std::size_t cells() const { return n * h * w; }
  std::size_t positives() const;
};

/// The IoU-driven regression loss -(1-u)(alpha-u)log(u), u clamped to [1e-6, 1].
double l_ious(double iou_value, double alpha);
/// d l_ious / du (zero below the clamp).
double l_ious_derivative(double iou_value, double alpha);
inline constexpr double kIouEpsilon = 1e-6;

/// sqrt(min(l,r)/max(l,r) * min(t,b)/max(t,b)) for a point strictly usable
/// inside `box`; 0 outside.
double centerness(double x, double y, const BBox& box);

/// Labels every cell of `anchors` against the per-sample ground truth (given
/// in search-image pixels). Cells are visited independently, so the result
/// does not depend on traversal order.
LabelAssignment assign_labels(const AnchorSet& anchors, std::span<const BBox> gt,
                              const AnchorGeometry& geometry, const LabelThresholds& thresholds);

struct HeadOutputs {
  Tensor cls1;  // [N,2,h,w], channel 1 = positive anchor
  Tensor cls2;  // [N,2,h,w], channel 1 = inside ground truth
  Tensor cls3;  // [N,1,h,w], centerness logit
  Tensor reg;   // [N,4,h,w], (dx, dy, dw, dh) relative to the anchor
};

class Heads {
 public:
  Heads(ParameterSet& params, std::size_t channels);
  void init(Rng& rng) const;
  HeadOutputs forward(const Tensor& r) const;

 private:
  struct Branch {
    Conv conv1;
    Conv conv2;
  };
  Branch cls1_, cls2_, cls3_, reg_;
};

/// Final boxes from anchors and regression:
///   cx = a.cx + dx*a.w, cy = a.cy + dy*a.h, w = a.w*exp(dw), h = a.h*exp(dh).
Tensor decode_boxes(const Tensor& anchors, const Tensor& reg);

/// Two-class softmax cross-entropy averaged over cells whose target is 0 or 1;
/// target -1 is ignored. Zero when nothing contributes.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> targets);
/// Sigmoid binary cross-entropy against soft targets, averaged over all cells.
Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets);
/// Mean of l_ious(IoU(pred, target)) over positive cells; zero without positives.
Tensor iou_loss(const Tensor& boxes, const LabelAssignment& labels, double alpha);

struct LossBreakdown {
  Tensor total;
  double cls1 = 0.0;
  double cls2 = 0.0;
  double cls3 = 0.0;
  double reg = 0.0;
};

/// w1*CE(cls1) + w2*CE(cls2) + w3*BCE(cls3) + mean_pos l_ious(IoU(pred, gt)).
LossBreakdown total_loss(const HeadOutputs& heads, const Tensor& anchors,
                         const LabelAssignment& labels, const LossWeights& weights);

}  // namespace siamapn
