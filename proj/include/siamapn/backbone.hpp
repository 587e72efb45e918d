#pragma once

#include <cstddef>
#include <vector>

#include "siamapn/nn.hpp"
#include "siamapn/tensor.hpp"

namespace siamapn {

struct BackboneStage {
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t pool_kernel = 0;  // 0: no pooling after the conv
  std::size_t pool_stride = 0;
  bool relu = true;
};

/// Five-stage AlexNet-style schedule. Stages 4 and 5 keep the spatial size so
/// their outputs line up cell for cell.
struct BackboneConfig {
  std::vector<BackboneStage> stages;
  std::size_t template_size = 127;
  std::size_t search_size = 287;
  /// Leading stages held fixed during training (their params get no grads).
  std::size_t frozen_stages = 0;

  /// Full-width schedule (96, 256, 384, 384, 256): 127 -> 6x6, 287 -> 26x26.
  static BackboneConfig alexnet();
  /// Same geometry with custom widths, used for desk-scale training.
  static BackboneConfig alexnet_with_widths(const std::vector<std::size_t>& widths);

  /// Closed-form spatial size of stage outputs for a square input of `input` px.
  std::size_t stage_output_size(std::size_t stage, std::size_t input) const;
  std::size_t output_size(std::size_t input) const { return stage_output_size(4, input); }
  /// Product of conv and pool strides.
  std::size_t total_stride() const;
  std::size_t f4_channels() const { return stages.at(3).out_channels; }
  std::size_t f5_channels() const { return stages.at(4).out_channels; }

  void validate() const;
};

/// Outputs of the last two stages for one batch of images.
struct FeaturePair {
  Tensor f4;
  Tensor f5;
};

class Backbone {
 public:
  Backbone(ParameterSet& params, BackboneConfig cfg);

  void init(Rng& rng) const;

  /// image: [N,3,H,W].
  FeaturePair extract(const Tensor& image) const;

  /// Output of the frozen leading stages (the image itself when none are
  /// frozen). extract(x) == extract_from_stem(stem(x)).
  Tensor stem(const Tensor& image) const;
  FeaturePair extract_from_stem(const Tensor& stem_out) const;

  const BackboneConfig& config() const { return cfg_; }

 private:
  Tensor run_stage(std::size_t stage, const Tensor& x) const;

  BackboneConfig cfg_;
  std::vector<Conv> convs_;
};

}  // namespace siamapn
