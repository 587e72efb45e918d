#pragma once

#include <cstdint>
#include <memory>

#include "siamapn/aan.hpp"
#include "siamapn/apn.hpp"
#include "siamapn/backbone.hpp"
#include "siamapn/config.hpp"
#include "siamapn/heads.hpp"
#include "siamapn/nn.hpp"

namespace siamapn {

/// Everything one forward pass produces, kept for inspection and loss terms.
struct ForwardResult {
  FusedMap fused;
  AnchorSet anchors;
  AanOutput aan;
  HeadOutputs heads;
};

/// Backbone -> APN-DF -> AAN -> heads. Owns its parameters; not copyable
/// (use clone()).
class SiamApnPP {
 public:
  explicit SiamApnPP(const ModelConfig& cfg);
  SiamApnPP(const SiamApnPP&) = delete;
  SiamApnPP& operator=(const SiamApnPP&) = delete;

  void init(std::uint64_t seed);
  std::unique_ptr<SiamApnPP> clone() const;

  ForwardResult forward(const FeaturePair& zf, const FeaturePair& xf) const;
  ForwardResult forward_images(const Tensor& templ, const Tensor& search) const;

  AnchorGeometry anchor_geometry() const;

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const ModelConfig& config() const { return cfg_; }
  const Backbone& backbone() const { return backbone_; }
  const ApnDf& apn() const { return apn_; }
  const Aan& aan() const { return aan_; }
  const Heads& heads() const { return heads_; }

 private:
  ModelConfig cfg_;
  ParameterSet params_;
  Backbone backbone_;
  ApnDf apn_;
  Aan aan_;
  Heads heads_;
};

}  // namespace siamapn
