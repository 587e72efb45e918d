#include "siamapn/backbone.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "siamapn/ops.hpp"

namespace siamapn {

BackboneConfig BackboneConfig::alexnet() { return alexnet_with_widths({96, 256, 384, 384, 256}); }

BackboneConfig BackboneConfig::alexnet_with_widths(const std::vector<std::size_t>& widths) {
  if (widths.size() != 5) throw std::invalid_argument("backbone: expected five stage widths");
  BackboneConfig cfg;
  // Stage 3 uses a 7x7 kernel so that stages 4/5 can preserve size and still
  // land on 6x6 (template) and 26x26 (search).
  cfg.stages = {
      {widths[0], 11, 2, 0, 3, 2, true},
      {widths[1], 5, 1, 0, 3, 2, true},
      {widths[2], 7, 1, 0, 0, 0, true},
      {widths[3], 3, 1, 1, 0, 0, true},
      {widths[4], 3, 1, 1, 0, 0, false},
  };
  return cfg;
}

std::size_t BackboneConfig::stage_output_size(std::size_t stage, std::size_t input) const {
  std::size_t s = input;
  for (std::size_t i = 0; i <= stage && i < stages.size(); ++i) {
    const BackboneStage& st = stages[i];
    if (s + 2 * st.pad < st.kernel) return 0;
    s = (s + 2 * st.pad - st.kernel) / st.stride + 1;
    if (st.pool_kernel > 0) {
      if (s < st.pool_kernel) return 0;
      s = (s - st.pool_kernel) / st.pool_stride + 1;
    }
  }
  return s;
}

std::size_t BackboneConfig::total_stride() const {
  std::size_t s = 1;
  for (const BackboneStage& st : stages) {
    s *= st.stride;
    if (st.pool_kernel > 0) s *= st.pool_stride;
  }
  return s;
}

void BackboneConfig::validate() const {
  if (stages.size() != 5) throw std::invalid_argument("backbone: exactly five stages required");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const BackboneStage& st = stages[i];
    if (st.out_channels == 0 || st.kernel == 0 || st.stride == 0 ||
        (st.pool_kernel > 0 && st.pool_stride == 0)) {
      throw std::invalid_argument("backbone: invalid stage " + std::to_string(i + 1));
    }
  }
  for (std::size_t i = 3; i < 5; ++i) {
    const BackboneStage& st = stages[i];
    if (st.stride != 1 || st.pool_kernel != 0 || 2 * st.pad + 1 != st.kernel) {
      throw std::invalid_argument("backbone: stage " + std::to_string(i + 1) +
                                  " must be stride 1 and size preserving");
    }
  }
  if (frozen_stages > 5) throw std::invalid_argument("backbone: frozen_stages > 5");
}

Backbone::Backbone(ParameterSet& params, BackboneConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::size_t cin = 3;
  for (std::size_t i = 0; i < cfg_.stages.size(); ++i) {
    const BackboneStage& st = cfg_.stages[i];
    convs_.push_back(Conv::make(params, "backbone.conv" + std::to_string(i + 1), cin,
                                st.out_channels, st.kernel, st.stride, st.pad));
    cin = st.out_channels;
  }
  for (std::size_t i = 0; i < cfg_.frozen_stages; ++i) {
    params.set_trainable("backbone.conv" + std::to_string(i + 1) + ".", false);
  }
}

void Backbone::init(Rng& rng) const {
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    convs_[i].init(rng, cfg_.stages[i].relu ? std::sqrt(2.0) : 1.0);
  }
}

Tensor Backbone::run_stage(std::size_t stage, const Tensor& x) const {
  const BackboneStage& st = cfg_.stages[stage];
  Tensor y = convs_[stage](x);
  if (st.pool_kernel > 0) y = maxpool2d(y, st.pool_kernel, st.pool_stride);
  if (st.relu) y = relu(y);
  return y;
}

Tensor Backbone::stem(const Tensor& image) const {
  if (image.rank() != 4 || image.dim(1) != 3) {
    throw ShapeError("backbone: expected [N,3,H,W] image, got " + shape_str(image.shape()));
  }
  Tensor x = image;
  for (std::size_t i = 0; i < cfg_.frozen_stages && i < 4; ++i) x = run_stage(i, x);
  return x;
}

FeaturePair Backbone::extract_from_stem(const Tensor& stem_out) const {
  Tensor x = stem_out;
  const std::size_t first = std::min<std::size_t>(cfg_.frozen_stages, 4);
  for (std::size_t i = first; i < 4; ++i) x = run_stage(i, x);
  FeaturePair out;
  out.f4 = x;
  out.f5 = run_stage(4, x);
  return out;
}

FeaturePair Backbone::extract(const Tensor& image) const { return extract_from_stem(stem(image)); }

}  // namespace siamapn
