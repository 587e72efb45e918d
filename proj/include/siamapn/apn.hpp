#pragma once

#include <cstddef>

#include "siamapn/backbone.hpp"
#include "siamapn/nn.hpp"
#include "siamapn/tensor.hpp"

namespace siamapn {

struct ApnConfig {
  /// Width every reduction conv maps to.
  std::size_t channels = 256;
  /// Hidden width of the fusion FFN (channels / 4 by default).
  std::size_t ffn_hidden = 64;
  /// Anchor side at zero regression, in search-image pixels.
  double anchor_base = 64.0;
};

/// Maps feature-map cells to search-image pixels.
struct AnchorGeometry {
  std::size_t stride = 8;
  std::size_t search_size = 287;
  double base = 64.0;

  /// Pixel coordinate of the center of cell `index` on a `map_size`-cell axis;
  /// the middle cell lands on the search-image center.
  double cell_center(std::size_t index, std::size_t map_size) const {
    return 0.5 * static_cast<double>(search_size) +
           (static_cast<double>(index) - 0.5 * static_cast<double>(map_size - 1)) *
               static_cast<double>(stride);
  }
  double max_center() const { return static_cast<double>(search_size) - 1.0; }
  double min_side() const { return 1.0; }
  double max_side() const { return static_cast<double>(search_size); }
};

/// One adaptive anchor per cell: boxes [N,4,h,w] holding (cx, cy, w, h) in
/// search-image pixels.
struct AnchorSet {
  Tensor boxes;
  std::size_t map_h = 0;
  std::size_t map_w = 0;
  std::size_t stride = 0;
};

struct FusedMap {
  Tensor r4;
  Tensor r5;
  Tensor ra;
};

/// Decodes raw (dx, dy, dw, dh) into anchors:
///   cx = center(j) + dx*stride, cy = center(i) + dy*stride,
///   w = base*exp(dw), h = base*exp(dh),
/// with centers clamped to [0, search_size-1] and sides to [1, search_size].
/// Differentiable (zero gradient where a clamp is active).
AnchorSet decode_anchors(const Tensor& raw, const AnchorGeometry& geometry);

/// base + g1 * FFN(GAP(guide)) (.) base + g2 * F(Cat(guide, base)),
/// the gated residual used by both the dual-feature fusion and cross-AAN.
Tensor gated_fusion(const Tensor& base, const Tensor& guide, const Tensor& g1, const Tensor& g2,
                    const Ffn& ffn, const Conv& cat_conv);

/// Anchor proposal network over dual (level-4 / level-5) features.
class ApnDf {
 public:
  ApnDf(ParameterSet& params, const ApnConfig& cfg, std::size_t f4_channels,
        std::size_t f5_channels);

  /// `corr_gain` scales the layers that feed or follow a correlation so its
  /// response is a mean over template cells rather than a sum.
  void init(Rng& rng, double corr_gain = 1.0) const;

  /// R4 = F(x.f4 * z.f4): correlation first, then the 1x1 reduction.
  Tensor compute_r4(const FeaturePair& zf, const FeaturePair& xf) const;
  /// R5 = F(x.f5) * F'(z.f5): separate reductions before correlation.
  Tensor compute_r5(const FeaturePair& zf, const FeaturePair& xf) const;
  /// RA = R5 + g1 * FFN(GAP(R4)) (.) R5 + g2 * F(Cat(R4, R5)).
  Tensor fuse(const Tensor& r4, const Tensor& r5) const;
  FusedMap forward(const FeaturePair& zf, const FeaturePair& xf) const;

  /// Two stacked 3x3 convs (C -> C -> 4) producing raw anchor offsets.
  Tensor propose_raw(const Tensor& ra) const;
  AnchorSet propose(const Tensor& ra, const AnchorGeometry& geometry) const;

  const Tensor& gamma1() const { return gamma1_; }
  const Tensor& gamma2() const { return gamma2_; }
  const Conv& r4_reduce() const { return r4_reduce_; }
  const Conv& r5_search() const { return r5_search_; }
  const Conv& r5_template() const { return r5_template_; }
  const Ffn& fusion_ffn() const { return fusion_ffn_; }
  const Conv& fusion_cat() const { return fusion_cat_; }

 private:
  Conv r4_reduce_;
  Conv r5_search_;
  Conv r5_template_;
  Ffn fusion_ffn_;
  Conv fusion_cat_;
  Tensor gamma1_;
  Tensor gamma2_;
  Conv propose1_;
  Conv propose2_;
};

}  // namespace siamapn
