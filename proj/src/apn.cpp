#include "siamapn/apn.hpp"

#include <algorithm>
#include <cmath>

#include "siamapn/ops.hpp"
#include "siamapn/tape.hpp"

namespace siamapn {

namespace {

// Raw log-scale offsets beyond this saturate before exp() can overflow.
constexpr double kMaxLogScale = 20.0;

}  // namespace

AnchorSet decode_anchors(const Tensor& raw, const AnchorGeometry& geometry) {
  if (raw.rank() != 4 || raw.dim(1) != 4) {
    throw ShapeError("decode_anchors: expected [N,4,h,w], got " + shape_str(raw.shape()));
  }
  const std::size_t n = raw.dim(0), h = raw.dim(2), w = raw.dim(3), hw = h * w;
  const double stride = static_cast<double>(geometry.stride);
  Tensor boxes(raw.shape());
  // Per-element local derivative d(out)/d(raw); zero where clamped.
  std::vector<double> local(raw.numel());
  const double* r = raw.data().data();
  double* b = boxes.data_mut().data();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        const std::size_t cell = i * w + j;
        const std::size_t base_idx = s * 4 * hw + cell;
        const double centers[2] = {geometry.cell_center(j, w), geometry.cell_center(i, h)};
        for (std::size_t k = 0; k < 2; ++k) {
          const std::size_t idx = base_idx + k * hw;
          const double v = centers[k] + r[idx] * stride;
          const double c = std::clamp(v, 0.0, geometry.max_center());
          b[idx] = c;
          local[idx] = (c == v) ? stride : 0.0;
        }
        for (std::size_t k = 2; k < 4; ++k) {
          const std::size_t idx = base_idx + k * hw;
          const double e = std::clamp(r[idx], -kMaxLogScale, kMaxLogScale);
          const double v = geometry.base * std::exp(e);
          const double c = std::clamp(v, geometry.min_side(), geometry.max_side());
          b[idx] = c;
          local[idx] = (c == v && e == r[idx]) ? v : 0.0;
        }
      }
    }
  }
  if (autodiff::should_record({&raw})) {
    autodiff::record(boxes, [rn = raw.node(), bn = boxes.node(), local = std::move(local)] {
      std::vector<double>& g = rn->grad_buffer();
      for (std::size_t i = 0; i < local.size(); ++i) g[i] += bn->grad[i] * local[i];
    });
  }
  return AnchorSet{boxes, h, w, geometry.stride};
}

Tensor gated_fusion(const Tensor& base, const Tensor& guide, const Tensor& g1, const Tensor& g2,
                    const Ffn& ffn, const Conv& cat_conv) {
  if (base.shape() != guide.shape()) {
    throw ShapeError("gated_fusion: shape mismatch " + shape_str(base.shape()) + " vs " +
                     shape_str(guide.shape()));
  }
  const Tensor channel_weights = ffn(gap(guide));
  const Tensor reweighted = scale(mul_channelwise(base, channel_weights), g1);
  const Tensor mixed = scale(cat_conv(concat_channels(guide, base)), g2);
  return add(add(base, reweighted), mixed);
}

ApnDf::ApnDf(ParameterSet& params, const ApnConfig& cfg, std::size_t f4_channels,
             std::size_t f5_channels) {
  const std::size_t c = cfg.channels;
  r4_reduce_ = Conv::make(params, "apn.r4_reduce", f4_channels, c, 1, 1, 0);
  r5_search_ = Conv::make(params, "apn.r5_search", f5_channels, c, 1, 1, 0);
  r5_template_ = Conv::make(params, "apn.r5_template", f5_channels, c, 1, 1, 0);
  fusion_ffn_ = Ffn::make(params, "apn.fusion_ffn", c, cfg.ffn_hidden);
  fusion_cat_ = Conv::make(params, "apn.fusion_cat", 2 * c, c, 1, 1, 0);
  gamma1_ = params.add("apn.gamma1", Shape{1});
  gamma2_ = params.add("apn.gamma2", Shape{1});
  propose1_ = Conv::make(params, "apn.propose1", c, c, 3, 1, 1);
  propose2_ = Conv::make(params, "apn.propose2", c, 4, 3, 1, 1);
}

void ApnDf::init(Rng& rng, double corr_gain) const {
  r4_reduce_.init(rng, corr_gain);
  r5_search_.init(rng, 1.0);
  r5_template_.init(rng, corr_gain);
  fusion_ffn_.init(rng);
  fusion_cat_.init(rng, 1.0);
  propose1_.init(rng, std::sqrt(2.0));
  // Small offsets at start: anchors begin near their grid cells with base size.
  propose2_.init(rng, 0.01);
  Tensor g1 = gamma1_, g2 = gamma2_;
  g1.data_mut()[0] = 0.0;
  g2.data_mut()[0] = 0.0;
}

Tensor ApnDf::compute_r4(const FeaturePair& zf, const FeaturePair& xf) const {
  return r4_reduce_(dwxcorr(xf.f4, zf.f4));
}

Tensor ApnDf::compute_r5(const FeaturePair& zf, const FeaturePair& xf) const {
  return dwxcorr(r5_search_(xf.f5), r5_template_(zf.f5));
}

Tensor ApnDf::fuse(const Tensor& r4, const Tensor& r5) const {
  return gated_fusion(r5, r4, gamma1_, gamma2_, fusion_ffn_, fusion_cat_);
}

FusedMap ApnDf::forward(const FeaturePair& zf, const FeaturePair& xf) const {
  FusedMap m;
  m.r4 = compute_r4(zf, xf);
  m.r5 = compute_r5(zf, xf);
  m.ra = fuse(m.r4, m.r5);
  return m;
}

Tensor ApnDf::propose_raw(const Tensor& ra) const { return propose2_(relu(propose1_(ra))); }

AnchorSet ApnDf::propose(const Tensor& ra, const AnchorGeometry& geometry) const {
  return decode_anchors(propose_raw(ra), geometry);
}

}  // namespace siamapn
