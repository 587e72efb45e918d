#include "siamapn/aan.hpp"

#include <cmath>

#include "siamapn/apn.hpp"
#include "siamapn/ops.hpp"

namespace siamapn {

Aan::Aan(ParameterSet& params, const AanConfig& cfg, std::size_t channels,
         std::size_t f5_channels) {
  const std::size_t c = channels;
  r5p_search_ = Conv::make(params, "aan.r5p_search", f5_channels, c, 1, 1, 0);
  r5p_template_ = Conv::make(params, "aan.r5p_template", f5_channels, c, 1, 1, 0);
  query_ = Conv::make(params, "aan.query", c, c, 1, 1, 0);
  key_ = Conv::make(params, "aan.key", c, c, 1, 1, 0);
  value_ = Conv::make(params, "aan.value", c, c, 1, 1, 0);
  channel_ffn_ = Ffn::make(params, "aan.channel_ffn", c, cfg.ffn_hidden);
  cross_ffn_ = Ffn::make(params, "aan.cross_ffn", c, cfg.ffn_hidden);
  cross_cat_ = Conv::make(params, "aan.cross_cat", 2 * c, c, 1, 1, 0);
  gamma3_ = params.add("aan.gamma3", Shape{1});
  gamma4_ = params.add("aan.gamma4", Shape{1});
  gamma5_ = params.add("aan.gamma5", Shape{1});
  gamma6_ = params.add("aan.gamma6", Shape{1});
}

void Aan::init(Rng& rng, double corr_gain) const {
  r5p_search_.init(rng, 1.0);
  r5p_template_.init(rng, corr_gain);
  query_.init(rng, 1.0);
  key_.init(rng, 1.0);
  value_.init(rng, 1.0);
  channel_ffn_.init(rng);
  cross_ffn_.init(rng);
  cross_cat_.init(rng, 1.0);
  for (Tensor g : {gamma3_, gamma4_, gamma5_, gamma6_}) g.data_mut()[0] = 0.0;
}

Tensor Aan::compute_r5prime(const FeaturePair& zf, const FeaturePair& xf) const {
  return dwxcorr(r5p_search_(xf.f5), r5p_template_(zf.f5));
}

Tensor Aan::attention_map(const Tensor& r5p) const {
  const std::size_t n = r5p.dim(0), c = r5p.dim(1), hw = r5p.dim(2) * r5p.dim(3);
  const Tensor q = reshape(query_(r5p), Shape{n, c, hw});
  const Tensor k = reshape(key_(r5p), Shape{n, c, hw});
  return softmax_lastaxis(matmul(transpose_last2(q), k));
}

Tensor Aan::spatial_attention(const Tensor& r5p) const {
  const std::size_t n = r5p.dim(0), c = r5p.dim(1), hw = r5p.dim(2) * r5p.dim(3);
  const Tensor attn = attention_map(r5p);
  const Tensor v = reshape(value_(r5p), Shape{n, c, hw});
  const Tensor aggregated = reshape(matmul(v, transpose_last2(attn)), r5p.shape());
  return add(scale(aggregated, gamma3_), r5p);
}

Tensor Aan::channel_attention(const Tensor& rs) const {
  const Tensor w = add(channel_ffn_(gap(rs)), channel_ffn_(gmp(rs)));
  return add(rs, scale(mul_channelwise(rs, sigmoid(w)), gamma4_));
}

Tensor Aan::cross_aan(const Tensor& rc, const Tensor& ra) const {
  return gated_fusion(rc, ra, gamma5_, gamma6_, cross_ffn_, cross_cat_);
}

AanOutput Aan::forward(const FeaturePair& zf, const FeaturePair& xf, const Tensor& ra) const {
  AanOutput out;
  out.r5prime = compute_r5prime(zf, xf);
  out.rs = spatial_attention(out.r5prime);
  out.rc = channel_attention(out.rs);
  out.r = cross_aan(out.rc, ra);
  return out;
}

}  // namespace siamapn
