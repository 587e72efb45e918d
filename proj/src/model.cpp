#include "siamapn/model.hpp"

namespace siamapn {

SiamApnPP::SiamApnPP(const ModelConfig& cfg)
    : cfg_(cfg),
      backbone_(params_, cfg.backbone),
      apn_(params_, cfg.apn, cfg.backbone.f4_channels(), cfg.backbone.f5_channels()),
      aan_(params_, cfg.aan, cfg.apn.channels, cfg.backbone.f5_channels()),
      heads_(params_, cfg.apn.channels) {}

void SiamApnPP::init(std::uint64_t seed) {
  Rng rng(seed);
  backbone_.init(rng);
  const double t = static_cast<double>(cfg_.backbone.output_size(cfg_.backbone.template_size));
  apn_.init(rng, 1.0 / (t * t));
  aan_.init(rng, 1.0 / (t * t));
  heads_.init(rng);
}

std::unique_ptr<SiamApnPP> SiamApnPP::clone() const {
  auto copy = std::make_unique<SiamApnPP>(cfg_);
  copy->params_.copy_values_from(params_);
  return copy;
}

AnchorGeometry SiamApnPP::anchor_geometry() const {
  return AnchorGeometry{cfg_.backbone.total_stride(), cfg_.backbone.search_size,
                        cfg_.apn.anchor_base};
}

ForwardResult SiamApnPP::forward(const FeaturePair& zf, const FeaturePair& xf) const {
  ForwardResult out;
  out.fused = apn_.forward(zf, xf);
  out.anchors = apn_.propose(out.fused.ra, anchor_geometry());
  out.aan = aan_.forward(zf, xf, out.fused.ra);
  out.heads = heads_.forward(out.aan.r);
  return out;
}

ForwardResult SiamApnPP::forward_images(const Tensor& templ, const Tensor& search) const {
  return forward(backbone_.extract(templ), backbone_.extract(search));
}

}  // namespace siamapn
