#include "siamapn/heads.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "siamapn/ops.hpp"
#include "siamapn/tape.hpp"

namespace siamapn {

namespace {

constexpr double kMaxRegLogScale = 4.0;

void require_map(const char* op, const Tensor& t, std::size_t channels) {
  if (!t.defined() || t.rank() != 4 || t.dim(1) != channels) {
    throw ShapeError(std::string(op) + ": expected [N," + std::to_string(channels) + ",h,w], got " +
                     (t.defined() ? shape_str(t.shape()) : std::string("undefined")));
  }
}

double log1p_exp(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// IoU of box p with g and its gradient with respect to (cx, cy, w, h) of p.
double iou_with_grad(const BBox& p, const BBox& g, double grad[4]) {
  const double ix0 = std::max(p.x0(), g.x0()), ix1 = std::min(p.x1(), g.x1());
  const double iy0 = std::max(p.y0(), g.y0()), iy1 = std::min(p.y1(), g.y1());
  const double iw = std::max(0.0, ix1 - ix0), ih = std::max(0.0, iy1 - iy0);
  const double inter = iw * ih;
  const double uni = p.area() + g.area() - inter;
  std::fill(grad, grad + 4, 0.0);
  if (uni <= 0.0) return 0.0;
  const double value = inter / uni;

  // d(iw)/d(cx, w) and d(ih)/d(cy, h); zero once the overlap vanishes.
  double diw_dcx = 0.0, diw_dw = 0.0, dih_dcy = 0.0, dih_dh = 0.0;
  if (ix1 - ix0 > 0.0) {
    const bool right_is_p = p.x1() < g.x1();
    const bool left_is_p = p.x0() > g.x0();
    diw_dcx = (right_is_p ? 1.0 : 0.0) - (left_is_p ? 1.0 : 0.0);
    diw_dw = 0.5 * ((right_is_p ? 1.0 : 0.0) + (left_is_p ? 1.0 : 0.0));
  }
  if (iy1 - iy0 > 0.0) {
    const bool bottom_is_p = p.y1() < g.y1();
    const bool top_is_p = p.y0() > g.y0();
    dih_dcy = (bottom_is_p ? 1.0 : 0.0) - (top_is_p ? 1.0 : 0.0);
    dih_dh = 0.5 * ((bottom_is_p ? 1.0 : 0.0) + (top_is_p ? 1.0 : 0.0));
  }
  const double dI[4] = {ih * diw_dcx, iw * dih_dcy, ih * diw_dw, iw * dih_dh};
  const double dA[4] = {0.0, 0.0, p.h, p.w};
  // IoU = I / (A + G - I)
  for (int k = 0; k < 4; ++k) grad[k] = (dI[k] * uni - inter * (dA[k] - dI[k])) / (uni * uni);
  return value;
}

}  // namespace

void LossWeights::validate() const {
  if (!(w1 > 0.0 && w2 > 0.0 && w3 > 0.0)) {
    throw std::invalid_argument("loss weights w1, w2, w3 must be positive");
  }
  if (!(alpha > 1.0 && alpha <= 2.0)) {
    throw std::invalid_argument("loss alpha must lie in (1, 2], got " + std::to_string(alpha));
  }
}

std::size_t LabelAssignment::positives() const {
  return static_cast<std::size_t>(std::count(cls1.begin(), cls1.end(), AnchorLabel::positive));
}

double l_ious(double iou_value, double alpha) {
  if (!(alpha > 1.0 && alpha <= 2.0)) {
    throw std::invalid_argument("l_ious: alpha must lie in (1, 2], got " + std::to_string(alpha));
  }
  const double u = std::clamp(iou_value, kIouEpsilon, 1.0);
  return -(1.0 - u) * (alpha - u) * std::log(u);
}

double l_ious_derivative(double iou_value, double alpha) {
  if (iou_value < kIouEpsilon) return 0.0;
  const double u = std::min(iou_value, 1.0);
  return -((2.0 * u - 1.0 - alpha) * std::log(u) + (1.0 - u) * (alpha - u) / u);
}

double centerness(double x, double y, const BBox& box) {
  const double l = x - box.x0(), r = box.x1() - x;
  const double t = y - box.y0(), b = box.y1() - y;
  if (l < 0.0 || r < 0.0 || t < 0.0 || b < 0.0) return 0.0;
  const double mx = std::max(l, r), my = std::max(t, b);
  if (mx <= 0.0 || my <= 0.0) return 0.0;
  return std::sqrt((std::min(l, r) / mx) * (std::min(t, b) / my));
}

LabelAssignment assign_labels(const AnchorSet& anchors, std::span<const BBox> gt,
                              const AnchorGeometry& geometry, const LabelThresholds& thresholds) {
  const Tensor& boxes = anchors.boxes;
  require_map("assign_labels", boxes, 4);
  if (gt.size() != boxes.dim(0)) {
    throw std::invalid_argument("assign_labels: " + std::to_string(gt.size()) +
                                " ground-truth boxes for batch of " + std::to_string(boxes.dim(0)));
  }
  LabelAssignment out;
  out.n = boxes.dim(0);
  out.h = boxes.dim(2);
  out.w = boxes.dim(3);
  const std::size_t hw = out.h * out.w;
  out.cls1.assign(out.cells(), AnchorLabel::negative);
  out.cls2.assign(out.cells(), 0);
  out.cls3.assign(out.cells(), 0.0);
  out.reg_target.assign(out.cells(), BBox{});
  out.degenerate.assign(out.n, false);
  const double* b = boxes.data().data();
  for (std::size_t s = 0; s < out.n; ++s) {
    const BBox& g = gt[s];
    if (!(g.w > 0.0 && g.h > 0.0)) {
      out.degenerate[s] = true;
      continue;
    }
    for (std::size_t i = 0; i < out.h; ++i) {
      for (std::size_t j = 0; j < out.w; ++j) {
        const std::size_t cell = i * out.w + j;
        const std::size_t idx = s * hw + cell;
        const double* base = b + s * 4 * hw + cell;
        const BBox anchor{base[0], base[hw], base[2 * hw], base[3 * hw]};
        const double overlap = iou(anchor, g);
        if (overlap >= thresholds.t_pos) {
          out.cls1[idx] = AnchorLabel::positive;
          out.reg_target[idx] = g;
        } else if (overlap > thresholds.t_neg) {
          out.cls1[idx] = AnchorLabel::ignore;
        }
        const double x = geometry.cell_center(j, out.w), y = geometry.cell_center(i, out.h);
        const bool inside = x >= g.x0() && x <= g.x1() && y >= g.y0() && y <= g.y1();
        out.cls2[idx] = inside ? 1 : 0;
        out.cls3[idx] = inside ? centerness(x, y, g) : 0.0;
      }
    }
  }
  return out;
}

Heads::Heads(ParameterSet& params, std::size_t channels) {
  auto branch = [&](const std::string& name, std::size_t out) {
    return Branch{Conv::make(params, "heads." + name + ".conv1", channels, channels, 3, 1, 1),
                  Conv::make(params, "heads." + name + ".conv2", channels, out, 3, 1, 1)};
  };
  cls1_ = branch("cls1", 2);
  cls2_ = branch("cls2", 2);
  cls3_ = branch("cls3", 1);
  reg_ = branch("reg", 4);
}

void Heads::init(Rng& rng) const {
  for (const Branch* b : {&cls1_, &cls2_, &cls3_}) {
    b->conv1.init(rng, std::sqrt(2.0));
    b->conv2.init(rng, 0.1);
  }
  reg_.conv1.init(rng, std::sqrt(2.0));
  reg_.conv2.init(rng, 0.01);
}

HeadOutputs Heads::forward(const Tensor& r) const {
  auto run = [&](const Branch& b) { return b.conv2(relu(b.conv1(r))); };
  return HeadOutputs{run(cls1_), run(cls2_), run(cls3_), run(reg_)};
}

Tensor decode_boxes(const Tensor& anchors, const Tensor& reg) {
  require_map("decode_boxes", anchors, 4);
  require_map("decode_boxes", reg, 4);
  if (anchors.shape() != reg.shape()) {
    throw ShapeError("decode_boxes: shape mismatch " + shape_str(anchors.shape()) + " vs " +
                     shape_str(reg.shape()));
  }
  const std::size_t n = anchors.dim(0), hw = anchors.dim(2) * anchors.dim(3);
  Tensor out(anchors.shape());
  const double* a = anchors.data().data();
  const double* r = reg.data().data();
  double* o = out.data_mut().data();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t c = 0; c < hw; ++c) {
      const std::size_t i0 = s * 4 * hw + c;
      const std::size_t i1 = i0 + hw, i2 = i0 + 2 * hw, i3 = i0 + 3 * hw;
      o[i0] = a[i0] + r[i0] * a[i2];
      o[i1] = a[i1] + r[i1] * a[i3];
      o[i2] = a[i2] * std::exp(std::clamp(r[i2], -kMaxRegLogScale, kMaxRegLogScale));
      o[i3] = a[i3] * std::exp(std::clamp(r[i3], -kMaxRegLogScale, kMaxRegLogScale));
    }
  }
  if (autodiff::should_record({&anchors, &reg})) {
    autodiff::record(out, [n, hw, an = anchors.node(), rn = reg.node(), on = out.node()] {
      double* ga = an->requires_grad ? an->grad_buffer().data() : nullptr;
      double* gr = rn->requires_grad ? rn->grad_buffer().data() : nullptr;
      const double* a = an->data.data();
      const double* r = rn->data.data();
      const double* g = on->grad.data();
      for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t c = 0; c < hw; ++c) {
          const std::size_t i0 = s * 4 * hw + c;
          const std::size_t i1 = i0 + hw, i2 = i0 + 2 * hw, i3 = i0 + 3 * hw;
          const bool free_w = std::abs(r[i2]) < kMaxRegLogScale;
          const bool free_h = std::abs(r[i3]) < kMaxRegLogScale;
          const double ew = std::exp(std::clamp(r[i2], -kMaxRegLogScale, kMaxRegLogScale));
          const double eh = std::exp(std::clamp(r[i3], -kMaxRegLogScale, kMaxRegLogScale));
          if (ga) {
            ga[i0] += g[i0];
            ga[i1] += g[i1];
            ga[i2] += g[i0] * r[i0] + g[i2] * ew;
            ga[i3] += g[i1] * r[i1] + g[i3] * eh;
          }
          if (gr) {
            gr[i0] += g[i0] * a[i2];
            gr[i1] += g[i1] * a[i3];
            if (free_w) gr[i2] += g[i2] * a[i2] * ew;
            if (free_h) gr[i3] += g[i3] * a[i3] * eh;
          }
        }
      }
    });
  }
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> targets) {
  require_map("softmax_cross_entropy", logits, 2);
  const std::size_t n = logits.dim(0), hw = logits.dim(2) * logits.dim(3);
  if (targets.size() != n * hw) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                     " targets for logits " + shape_str(logits.shape()));
  }
  const double* z = logits.data().data();
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t c = 0; c < hw; ++c) {
      const int t = targets[s * hw + c];
      if (t < 0) continue;
      const double z0 = z[s * 2 * hw + c], z1 = z[s * 2 * hw + hw + c];
      const double m = std::max(z0, z1);
      const double lse = m + std::log(std::exp(z0 - m) + std::exp(z1 - m));
      total += lse - (t == 1 ? z1 : z0);
      ++count;
    }
  }
  Tensor out = Tensor::scalar(count ? total / static_cast<double>(count) : 0.0);
  if (count > 0 && autodiff::should_record({&logits})) {
    std::vector<int> tg(targets.begin(), targets.end());
    autodiff::record(out, [n, hw, count, tg = std::move(tg), ln = logits.node(), on = out.node()] {
      std::vector<double>& g = ln->grad_buffer();
      const double scale = on->grad[0] / static_cast<double>(count);
      const double* z = ln->data.data();
      for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t c = 0; c < hw; ++c) {
          const int t = tg[s * hw + c];
          if (t < 0) continue;
          const std::size_t i0 = s * 2 * hw + c, i1 = i0 + hw;
          const double p1 = stable_sigmoid(z[i1] - z[i0]);
          const double p0 = 1.0 - p1;
          g[i0] += scale * (p0 - (t == 0 ? 1.0 : 0.0));
          g[i1] += scale * (p1 - (t == 1 ? 1.0 : 0.0));
        }
      }
    });
  }
  return out;
}

Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets) {
  require_map("bce_with_logits", logits, 1);
  if (targets.size() != logits.numel()) {
    throw ShapeError("bce_with_logits: " + std::to_string(targets.size()) +
                     " targets for logits " + shape_str(logits.shape()));
  }
  const double* z = logits.data().data();
  double total = 0.0;
  for (std::size_t i = 0; i < logits.numel(); ++i) total += log1p_exp(z[i]) - z[i] * targets[i];
  const double count = static_cast<double>(logits.numel());
  Tensor out = Tensor::scalar(total / count);
  if (autodiff::should_record({&logits})) {
    std::vector<double> tg(targets.begin(), targets.end());
    autodiff::record(out, [count, tg = std::move(tg), ln = logits.node(), on = out.node()] {
      std::vector<double>& g = ln->grad_buffer();
      const double scale = on->grad[0] / count;
      for (std::size_t i = 0; i < tg.size(); ++i) {
        g[i] += scale * (stable_sigmoid(ln->data[i]) - tg[i]);
      }
    });
  }
  return out;
}

Tensor iou_loss(const Tensor& boxes, const LabelAssignment& labels, double alpha) {
  require_map("iou_loss", boxes, 4);
  const std::size_t n = boxes.dim(0), hw = boxes.dim(2) * boxes.dim(3);
  if (labels.cells() != n * hw) {
    throw ShapeError("iou_loss: labels do not match boxes " + shape_str(boxes.shape()));
  }
  const double* b = boxes.data().data();
  std::vector<std::size_t> cells;
  std::vector<double> dloss;  // dL/d(cx,cy,w,h) per positive, 4 per cell
  double total = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t c = 0; c < hw; ++c) {
      const std::size_t idx = s * hw + c;
      if (labels.cls1[idx] != AnchorLabel::positive) continue;
      const std::size_t i0 = s * 4 * hw + c;
      const BBox pred{b[i0], b[i0 + hw], b[i0 + 2 * hw], b[i0 + 3 * hw]};
      double grad[4];
      const double u = iou_with_grad(pred, labels.reg_target[idx], grad);
      total += l_ious(u, alpha);
      const double dl = l_ious_derivative(u, alpha);
      cells.push_back(i0);
      for (double gk : grad) dloss.push_back(dl * gk);
    }
  }
  const std::size_t count = cells.size();
  Tensor out = Tensor::scalar(count ? total / static_cast<double>(count) : 0.0);
  if (count > 0 && autodiff::should_record({&boxes})) {
    autodiff::record(out, [hw, cells = std::move(cells), dloss = std::move(dloss),
                           bn = boxes.node(), on = out.node()] {
      std::vector<double>& g = bn->grad_buffer();
      const double scale = on->grad[0] / static_cast<double>(cells.size());
      for (std::size_t k = 0; k < cells.size(); ++k) {
        for (std::size_t j = 0; j < 4; ++j) g[cells[k] + j * hw] += scale * dloss[4 * k + j];
      }
    });
  }
  return out;
}

LossBreakdown total_loss(const HeadOutputs& heads, const Tensor& anchors,
                         const LabelAssignment& labels, const LossWeights& weights) {
  weights.validate();
  std::vector<int> t1(labels.cells()), t2(labels.cells());
  for (std::size_t i = 0; i < labels.cells(); ++i) {
    t1[i] = static_cast<int>(labels.cls1[i]);
    t2[i] = labels.cls2[i];
  }
  const Tensor l1 = softmax_cross_entropy(heads.cls1, t1);
  const Tensor l2 = softmax_cross_entropy(heads.cls2, t2);
  const Tensor l3 = bce_with_logits(heads.cls3, labels.cls3);
  const Tensor lr = iou_loss(decode_boxes(anchors, heads.reg), labels, weights.alpha);
  LossBreakdown out;
  out.cls1 = l1.item();
  out.cls2 = l2.item();
  out.cls3 = l3.item();
  out.reg = lr.item();
  out.total = add(add(add(scale_by(l1, weights.w1), scale_by(l2, weights.w2)),
                      scale_by(l3, weights.w3)),
                  lr);
  return out;
}

}  // namespace siamapn
