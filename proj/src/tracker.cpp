#include "siamapn/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "siamapn/tape.hpp"

namespace siamapn {

namespace {

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Probability of channel 1 for a two-channel logit pair.
double positive_prob(double l0, double l1) { return sigmoid_scalar(l1 - l0); }

double padded_size(double w, double h) {
  const double p = 0.5 * (w + h);
  return std::sqrt((w + p) * (h + p));
}

double change(double r) { return std::max(r, 1.0 / r); }

}  // namespace

CropRegion template_region(const BBox& box, double context_amount) {
  const double p = context_amount * (box.w + box.h);
  return CropRegion{box.cx, box.cy, std::sqrt((box.w + p) * (box.h + p))};
}

CropRegion search_region(const BBox& box, double context_amount, std::size_t template_size,
                         std::size_t search_size) {
  CropRegion r = template_region(box, context_amount);
  r.side *= static_cast<double>(search_size) / static_cast<double>(template_size);
  return r;
}

BBox patch_to_frame(const BBox& in_patch, const CropRegion& region, std::size_t crop_size) {
  const double s = region.side / static_cast<double>(crop_size);
  const double half = 0.5 * static_cast<double>(crop_size);
  return BBox{region.cx + (in_patch.cx - half) * s, region.cy + (in_patch.cy - half) * s,
              in_patch.w * s, in_patch.h * s};
}

std::vector<double> cosine_window(std::size_t h, std::size_t w) {
  auto hann = [](std::size_t n) {
    std::vector<double> v(n, 1.0);
    if (n < 2) return v;
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i + 1) /
                                  static_cast<double>(n + 1));
    }
    return v;
  };
  const std::vector<double> wy = hann(h), wx = hann(w);
  std::vector<double> out(h * w);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = wy[i] * wx[j];
  }
  return out;
}

SearchProposal make_proposal(const ForwardResult& out) {
  const HeadOutputs& hd = out.heads;
  const std::size_t h = hd.cls1.dim(2), w = hd.cls1.dim(3), hw = h * w;
  const Tensor boxes = decode_boxes(out.anchors.boxes, hd.reg);
  const double* c1 = hd.cls1.data().data();
  const double* c2 = hd.cls2.data().data();
  const double* c3 = hd.cls3.data().data();
  const double* b = boxes.data().data();
  SearchProposal p;
  p.h = h;
  p.w = w;
  p.score.resize(hw);
  p.boxes.resize(hw);
  for (std::size_t i = 0; i < hw; ++i) {
    p.score[i] = positive_prob(c1[i], c1[hw + i]) * positive_prob(c2[i], c2[hw + i]) *
                 sigmoid_scalar(c3[i]);
    p.boxes[i] = BBox{b[i], b[hw + i], b[2 * hw + i], b[3 * hw + i]};
  }
  return p;
}

Selection select_cell(const SearchProposal& proposal, const TrackState& state,
                      const CropRegion& region, std::size_t search_size) {
  const std::size_t n = proposal.h * proposal.w;
  if (n == 0 || proposal.score.size() != n || proposal.boxes.size() != n) {
    throw std::invalid_argument("select_cell: malformed proposal");
  }
  const double to_patch = static_cast<double>(search_size) / region.side;
  const double tw = state.last_box.w * to_patch, th = state.last_box.h * to_patch;
  const double target_size = padded_size(tw, th);
  const double target_ratio = tw / th;
  const double lambda = state.cfg.window_influence;
  const std::vector<double> window = cosine_window(proposal.h, proposal.w);

  Selection best;
  double best_value = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const BBox& b = proposal.boxes[i];
    const double sc = change(padded_size(b.w, b.h) / target_size);
    const double rc = change((b.w / b.h) / target_ratio);
    const double penalty = std::exp(-(rc * sc - 1.0) * state.cfg.penalty_k);
    const double value = (1.0 - lambda) * proposal.score[i] * penalty + lambda * window[i];
    if (value > best_value) {
      best_value = value;
      best.cell = i;
    }
  }
  best.score = best_value;
  best.box = patch_to_frame(proposal.boxes[best.cell], region, search_size);
  return best;
}

Tracker::Tracker(const SiamApnPP& model, TrackerConfig cfg) : model_(model) {
  state_.cfg = cfg;
}

void Tracker::init(const Image& frame, const BBox& box) {
  const double fw = static_cast<double>(frame.width), fh = static_cast<double>(frame.height);
  if (!(box.w > 0.0 && box.h > 0.0)) throw std::invalid_argument("tracker: zero-area box");
  if (box.x0() < 0.0 || box.y0() < 0.0 || box.x1() > fw || box.y1() > fh) {
    throw std::invalid_argument("tracker: box outside the frame");
  }
  const BackboneConfig& bb = model_.config().backbone;
  const CropRegion r = template_region(box, state_.cfg.context_amount);
  NoGradScope no_grad;
  const Tensor crop =
      crop_to_tensor(frame, r.cx, r.cy, r.side, bb.template_size, frame.channel_mean());
  state_.template_features = model_.backbone().extract(crop);
  state_.last_box = box;
  state_.frame_width = frame.width;
  state_.frame_height = frame.height;
  state_.initialized = true;
}

TrackResult Tracker::track(const Image& frame) {
  if (!state_.initialized) throw std::logic_error("tracker: track before init");
  const BackboneConfig& bb = model_.config().backbone;
  const CropRegion r = search_region(state_.last_box, state_.cfg.context_amount,
                                     bb.template_size, bb.search_size);
  NoGradScope no_grad;
  const Tensor crop =
      crop_to_tensor(frame, r.cx, r.cy, r.side, bb.search_size, frame.channel_mean());
  const ForwardResult out =
      model_.forward(state_.template_features, model_.backbone().extract(crop));
  state_.frame_width = frame.width;
  state_.frame_height = frame.height;
  return commit(select_cell(make_proposal(out), state_, r, bb.search_size));
}

TrackResult Tracker::commit(const Selection& sel) {
  const double lr = state_.cfg.size_lr;
  const double fw = static_cast<double>(state_.frame_width);
  const double fh = static_cast<double>(state_.frame_height);
  BBox b;
  b.w = std::clamp((1.0 - lr) * state_.last_box.w + lr * sel.box.w, 1.0, fw);
  b.h = std::clamp((1.0 - lr) * state_.last_box.h + lr * sel.box.h, 1.0, fh);
  b.cx = std::clamp(sel.box.cx, 0.5 * b.w, fw - 0.5 * b.w);
  b.cy = std::clamp(sel.box.cy, 0.5 * b.h, fh - 0.5 * b.h);
  state_.last_box = b;
  return TrackResult{b, sel.score};
}

std::vector<BBox> track_sequence(const SiamApnPP& model, const TrackerConfig& cfg,
                                 const std::vector<Image>& frames, const BBox& first) {
  std::vector<BBox> out;
  if (frames.empty()) return out;
  Tracker tracker(model, cfg);
  tracker.init(frames.front(), first);
  out.reserve(frames.size());
  out.push_back(first);
  for (std::size_t t = 1; t < frames.size(); ++t) out.push_back(tracker.track(frames[t]).box);
  return out;
}

}  // namespace siamapn
