#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "siamapn/aan.hpp"
#include "siamapn/apn.hpp"
#include "siamapn/backbone.hpp"
#include "siamapn/bbox.hpp"
#include "siamapn/heads.hpp"

namespace siamapn {

/// Inference post-processing. None of these are learned.
struct TrackerConfig {
  double window_influence = 0.4;  // cosine-window blend weight
  double penalty_k = 0.04;        // scale/ratio change penalty
  double context_amount = 0.5;    // template margin = context_amount * (w + h)
  double size_lr = 0.3;           // exponential smoothing of w, h
};

struct OccluderSpec {
  bool enabled = false;
  double center_x = 0.0;  // vertical bar spanning the full frame height
  double width = 24.0;
  std::size_t first_frame = 0;
  std::size_t last_frame = 0;  // inclusive
};

/// Script for a synthetic sequence: a textured rectangle moving over noise.
struct SequenceSpec {
  std::size_t width = 360;
  std::size_t height = 360;
  std::size_t frames = 60;
  BBox initial{180.0, 180.0, 48.0, 48.0};
  double vx = 0.0;          // px per frame
  double vy = 0.0;
  double scale_rate = 1.0;  // per-frame multiplicative size change
  double noise_amplitude = 48.0;
  OccluderSpec occluder;

  void validate() const;
};

struct TrainConfig {
  std::uint64_t seed = 7;       // sampling of training triples
  std::uint64_t init_seed = 1;  // weight initialization
  std::size_t steps = 300;
  std::size_t batch_size = 8;
  std::size_t num_triples = 16;
  double lr = 0.003;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double max_grad_norm = 5.0;  // global L2 clip; 0 disables
  std::size_t warmup_steps = 20;
  std::vector<std::size_t> lr_milestones;  // lr *= lr_decay at each
  double lr_decay = 0.1;
  double max_shift = 32.0;     // search-crop center jitter, in frame pixels
  double scale_jitter = 0.05;  // relative search-crop size jitter
  std::uint64_t sequence_seed = 1;
  SequenceSpec sequence;
};

struct ModelConfig {
  BackboneConfig backbone = BackboneConfig::alexnet();
  ApnConfig apn;
  AanConfig aan;
};

struct Config {
  ModelConfig model;
  LossWeights loss;
  LabelThresholds thresholds;
  TrackerConfig tracker;
  TrainConfig train;

  /// Full-width network with default hyper-parameters.
  static Config defaults();
  /// Narrow network for CPU training in minutes.
  static Config desk_scale();

  void validate() const;
};

nlohmann::json to_json(const Config& cfg);
nlohmann::json to_json(const SequenceSpec& spec);
/// Missing keys keep their defaults (starting from `base`).
Config config_from_json(const nlohmann::json& j, const Config& base = Config::defaults());
SequenceSpec sequence_spec_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);
Config load_config(const std::filesystem::path& path);

}  // namespace siamapn
