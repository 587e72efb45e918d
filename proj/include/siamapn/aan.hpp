#pragma once

#include <cstddef>

#include "siamapn/backbone.hpp"
#include "siamapn/nn.hpp"
#include "siamapn/tensor.hpp"

namespace siamapn {

struct AanConfig {
  std::size_t ffn_hidden = 64;
};

/// Intermediate maps of one AAN pass.
struct AanOutput {
  Tensor r5prime;
  Tensor rs;  // after spatial attention
  Tensor rc;  // after channel attention
  Tensor r;   // after cross-AAN
};

/// Attentional aggregation: self-AAN (spatial then channel attention on R'5)
/// followed by cross-AAN against the fused anchor map RA.
class Aan {
 public:
  Aan(ParameterSet& params, const AanConfig& cfg, std::size_t channels, std::size_t f5_channels);

  void init(Rng& rng, double corr_gain = 1.0) const;

  /// R'5 = G(x.f5) * G'(z.f5) with its own reduction convs.
  Tensor compute_r5prime(const FeaturePair& zf, const FeaturePair& xf) const;

  /// Row-stochastic [N, HW, HW] map softmax(Q^T K); row i holds query i's
  /// weights over key locations.
  Tensor attention_map(const Tensor& r5p) const;
  /// Rs = g3 * reshape(V [C x HW] * A^T) + R'5.
  Tensor spatial_attention(const Tensor& r5p) const;
  /// Rc = Rs + g4 * sigmoid(FFN(GAP(Rs)) + FFN(GMP(Rs))) (.) Rs, one shared FFN.
  Tensor channel_attention(const Tensor& rs) const;
  /// R = Rc + g5 * FFN'(GAP(RA)) (.) Rc + g6 * F(Cat(RA, Rc)).
  Tensor cross_aan(const Tensor& rc, const Tensor& ra) const;

  AanOutput forward(const FeaturePair& zf, const FeaturePair& xf, const Tensor& ra) const;

  const Conv& r5p_search() const { return r5p_search_; }
  const Conv& r5p_template() const { return r5p_template_; }
  const Conv& query() const { return query_; }
  const Conv& key() const { return key_; }
  const Conv& value() const { return value_; }
  const Ffn& channel_ffn() const { return channel_ffn_; }
  const Ffn& cross_ffn() const { return cross_ffn_; }
  const Conv& cross_cat() const { return cross_cat_; }
  const Tensor& gamma3() const { return gamma3_; }
  const Tensor& gamma4() const { return gamma4_; }
  const Tensor& gamma5() const { return gamma5_; }
  const Tensor& gamma6() const { return gamma6_; }

 private:
  Conv r5p_search_;
  Conv r5p_template_;
  Conv query_;
  Conv key_;
  Conv value_;
  Ffn channel_ffn_;
  Ffn cross_ffn_;
  Conv cross_cat_;
  Tensor gamma3_;
  Tensor gamma4_;
  Tensor gamma5_;
  Tensor gamma6_;
};

}  // namespace siamapn
