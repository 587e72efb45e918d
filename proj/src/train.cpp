#include "siamapn/train.hpp"

#include <cmath>
#include <numeric>
#include <utility>

#include "siamapn/format.hpp"
#include "siamapn/heads.hpp"
#include "siamapn/image.hpp"
#include "siamapn/ops.hpp"
#include "siamapn/tape.hpp"
#include "siamapn/tracker.hpp"

namespace siamapn {

std::vector<Triple> make_triples(const SyntheticSequence& seq, const Config& cfg) {
  const TrainConfig& tc = cfg.train;
  const BackboneConfig& bb = cfg.model.backbone;
  const double context = cfg.tracker.context_amount;
  const auto frames = static_cast<std::uint64_t>(seq.frames.size());
  if (frames == 0) throw std::invalid_argument("make_triples: empty sequence");
  Rng rng(tc.seed);
  std::vector<Triple> out;
  out.reserve(tc.num_triples);
  for (std::size_t i = 0; i < tc.num_triples; ++i) {
    const std::size_t a = rng.below(frames), b = rng.below(frames);
    const Image& fa = seq.frames[a];
    const Image& fb = seq.frames[b];
    const CropRegion zr = template_region(seq.gt[a], context);
    CropRegion xr = search_region(seq.gt[b], context, bb.template_size, bb.search_size);
    xr.cx += rng.uniform(-tc.max_shift, tc.max_shift);
    xr.cy += rng.uniform(-tc.max_shift, tc.max_shift);
    xr.side *= 1.0 + rng.uniform(-tc.scale_jitter, tc.scale_jitter);

    const double k = static_cast<double>(bb.search_size) / xr.side;
    const double half = 0.5 * static_cast<double>(bb.search_size);
    const BBox& g = seq.gt[b];
    Triple t;
    t.template_crop = crop_to_tensor(fa, zr.cx, zr.cy, zr.side, bb.template_size, fa.channel_mean());
    t.search_crop = crop_to_tensor(fb, xr.cx, xr.cy, xr.side, bb.search_size, fb.channel_mean());
    t.gt = BBox{half + (g.cx - xr.cx) * k, half + (g.cy - xr.cy) * k, g.w * k, g.h * k};
    out.push_back(std::move(t));
  }
  return out;
}

double learning_rate(const TrainConfig& cfg, std::size_t step) {
  double lr = cfg.lr;
  if (step < cfg.warmup_steps) {
    lr *= static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps);
  }
  for (std::size_t m : cfg.lr_milestones) {
    if (step >= m) lr *= cfg.lr_decay;
  }
  return lr;
}

Sgd::Sgd(ParameterSet& params, double momentum, double weight_decay, double max_grad_norm)
    : params_(params),
      momentum_(momentum),
      weight_decay_(weight_decay),
      max_grad_norm_(max_grad_norm) {
  buffers_.resize(params_.params().size());
}

double Sgd::step(double lr) {
  auto& ps = params_.params();
  double sq = 0.0;
  for (const Param& p : ps) {
    if (!p.trainable || !p.tensor.has_grad()) continue;
    for (double gk : p.tensor.grad()) {
      if (!std::isfinite(gk)) throw TrainingError("non-finite gradient in " + p.name);
      sq += gk * gk;
    }
  }
  const double norm = std::sqrt(sq);
  const double clip = max_grad_norm_ > 0.0 && norm > max_grad_norm_ ? max_grad_norm_ / norm : 1.0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Param& p = ps[i];
    if (!p.trainable) continue;
    std::span<double> w = p.tensor.data_mut();
    std::vector<double>& v = buffers_[i];
    const bool first = v.empty();
    if (first) v.assign(w.size(), 0.0);
    const bool has_grad = p.tensor.has_grad();
    std::span<const double> g = has_grad ? p.tensor.grad() : std::span<const double>{};
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double d = (has_grad ? clip * g[k] : 0.0) + weight_decay_ * w[k];
      v[k] = first ? d : momentum_ * v[k] + d;
      w[k] -= lr * v[k];
    }
  }
  return norm;
}

std::string loss_csv_row(const StepLog& s) {
  return std::to_string(s.step) + ',' + format_double(s.total) + ',' + format_double(s.cls1) +
         ',' + format_double(s.cls2) + ',' + format_double(s.cls3) + ',' + format_double(s.reg);
}

std::vector<StepLog> train_toy(SiamApnPP& model, const std::vector<Triple>& triples,
                               const Config& cfg, std::ostream* csv) {
  const TrainConfig& tc = cfg.train;
  if (triples.empty()) throw std::invalid_argument("train_toy: no training triples");
  const Backbone& backbone = model.backbone();
  const AnchorGeometry geometry = model.anchor_geometry();

  // The frozen stages never change, so their outputs are computed once.
  std::vector<Tensor> z_stem, x_stem;
  {
    NoGradScope no_grad;
    for (const Triple& t : triples) {
      z_stem.push_back(backbone.stem(t.template_crop));
      x_stem.push_back(backbone.stem(t.search_crop));
    }
  }

  Sgd sgd(model.params(), tc.momentum, tc.weight_decay, tc.max_grad_norm);
  Rng rng(tc.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(triples.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  if (csv) *csv << kLossCsvHeader << '\n';
  std::vector<StepLog> log;
  log.reserve(tc.steps);
  for (std::size_t step = 0; step < tc.steps; ++step) {
    std::vector<Tensor> zb, xb;
    std::vector<BBox> gt;
    for (std::size_t k = 0; k < tc.batch_size; ++k) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        cursor = 0;
      }
      const std::size_t idx = order[cursor++];
      zb.push_back(z_stem[idx]);
      xb.push_back(x_stem[idx]);
      gt.push_back(triples[idx].gt);
    }

    model.params().zero_grad();
    Tape tape;
    StepLog entry;
    entry.step = step;
    {
      TapeScope scope(tape);
      const FeaturePair zf = backbone.extract_from_stem(stack_batch(zb));
      const FeaturePair xf = backbone.extract_from_stem(stack_batch(xb));
      const ForwardResult out = model.forward(zf, xf);
      const LabelAssignment labels = assign_labels(out.anchors, gt, geometry, cfg.thresholds);
      const LossBreakdown loss = total_loss(out.heads, out.anchors.boxes, labels, cfg.loss);
      entry.total = loss.total.item();
      entry.cls1 = loss.cls1;
      entry.cls2 = loss.cls2;
      entry.cls3 = loss.cls3;
      entry.reg = loss.reg;
      if (!std::isfinite(entry.total)) {
        throw TrainingError("non-finite loss at step " + std::to_string(step) + ": " +
                            loss_csv_row(entry) + " (lr " + format_double(learning_rate(tc, step)) +
                            ", positives " + std::to_string(labels.positives()) + ")");
      }
      tape.backward(loss.total);
    }
    try {
      entry.grad_norm = sgd.step(learning_rate(tc, step));
    } catch (const TrainingError& e) {
      throw TrainingError(std::string(e.what()) + " at step " + std::to_string(step) + ": " +
                          loss_csv_row(entry));
    }
    log.push_back(entry);
    if (csv) *csv << loss_csv_row(entry) << '\n';
  }
  return log;
}

}  // namespace siamapn
