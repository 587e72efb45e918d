#include "siamapn/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace siamapn {

using nlohmann::json;

namespace {

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json stage_to_json(const BackboneStage& st) {
  return json{{"out_channels", st.out_channels}, {"kernel", st.kernel},
              {"stride", st.stride},             {"pad", st.pad},
              {"pool_kernel", st.pool_kernel},   {"pool_stride", st.pool_stride},
              {"relu", st.relu}};
}

BackboneStage stage_from_json(const json& j) {
  BackboneStage st;
  read_opt(j, "out_channels", st.out_channels);
  read_opt(j, "kernel", st.kernel);
  read_opt(j, "stride", st.stride);
  read_opt(j, "pad", st.pad);
  read_opt(j, "pool_kernel", st.pool_kernel);
  read_opt(j, "pool_stride", st.pool_stride);
  read_opt(j, "relu", st.relu);
  return st;
}

json box_to_json(const BBox& b) { return json{{"cx", b.cx}, {"cy", b.cy}, {"w", b.w}, {"h", b.h}}; }

BBox box_from_json(const json& j, BBox b) {
  read_opt(j, "cx", b.cx);
  read_opt(j, "cy", b.cy);
  read_opt(j, "w", b.w);
  read_opt(j, "h", b.h);
  return b;
}

}  // namespace

void SequenceSpec::validate() const {
  if (width < 320 || height < 320) {
    throw std::invalid_argument("sequence: frames must be at least 320x320");
  }
  if (frames == 0) throw std::invalid_argument("sequence: frame count must be positive");
  if (!(initial.w > 0.0 && initial.h > 0.0)) {
    throw std::invalid_argument("sequence: target must have positive size");
  }
  if (!(scale_rate > 0.0)) throw std::invalid_argument("sequence: scale_rate must be positive");
  const double fw = static_cast<double>(width), fh = static_cast<double>(height);
  for (std::size_t t = 0; t < frames; t += std::max<std::size_t>(1, frames - 1)) {
    const double s = std::pow(scale_rate, static_cast<double>(t));
    const double cx = initial.cx + vx * static_cast<double>(t);
    const double cy = initial.cy + vy * static_cast<double>(t);
    const double w = initial.w * s, h = initial.h * s;
    if (w > fw || h > fh) throw std::invalid_argument("sequence: target larger than frame");
    if (cx - 0.5 * w < 0.0 || cy - 0.5 * h < 0.0 || cx + 0.5 * w > fw || cy + 0.5 * h > fh) {
      throw std::invalid_argument("sequence: target leaves the frame at frame " +
                                  std::to_string(t));
    }
  }
}

Config Config::defaults() { return Config{}; }

Config Config::desk_scale() {
  Config cfg;
  cfg.model.backbone = BackboneConfig::alexnet_with_widths({8, 16, 24, 24, 16});
  cfg.model.backbone.frozen_stages = 2;
  cfg.model.apn.channels = 16;
  cfg.model.apn.ffn_hidden = 4;
  cfg.model.aan.ffn_hidden = 4;
  return cfg;
}

void Config::validate() const {
  model.backbone.validate();
  if (model.apn.channels == 0 || model.apn.ffn_hidden == 0 || model.aan.ffn_hidden == 0) {
    throw std::invalid_argument("config: apn/aan widths must be positive");
  }
  if (!(model.apn.anchor_base > 0.0)) throw std::invalid_argument("config: anchor_base must be > 0");
  loss.validate();
  if (!(thresholds.t_neg < thresholds.t_pos)) {
    throw std::invalid_argument("config: t_neg must be below t_pos");
  }
  if (tracker.window_influence < 0.0 || tracker.window_influence > 1.0) {
    throw std::invalid_argument("config: window_influence must lie in [0, 1]");
  }
  if (train.max_grad_norm < 0.0) throw std::invalid_argument("config: max_grad_norm must be >= 0");
  if (train.batch_size == 0 || train.num_triples == 0) {
    throw std::invalid_argument("config: batch_size and num_triples must be positive");
  }
}

json to_json(const SequenceSpec& spec) {
  return json{{"width", spec.width},
              {"height", spec.height},
              {"frames", spec.frames},
              {"initial", box_to_json(spec.initial)},
              {"vx", spec.vx},
              {"vy", spec.vy},
              {"scale_rate", spec.scale_rate},
              {"noise_amplitude", spec.noise_amplitude},
              {"occluder",
               {{"enabled", spec.occluder.enabled},
                {"center_x", spec.occluder.center_x},
                {"width", spec.occluder.width},
                {"first_frame", spec.occluder.first_frame},
                {"last_frame", spec.occluder.last_frame}}}};
}

SequenceSpec sequence_spec_from_json(const json& j) {
  SequenceSpec s;
  read_opt(j, "width", s.width);
  read_opt(j, "height", s.height);
  read_opt(j, "frames", s.frames);
  if (j.contains("initial")) s.initial = box_from_json(j.at("initial"), s.initial);
  read_opt(j, "vx", s.vx);
  read_opt(j, "vy", s.vy);
  read_opt(j, "scale_rate", s.scale_rate);
  read_opt(j, "noise_amplitude", s.noise_amplitude);
  if (j.contains("occluder")) {
    const json& o = j.at("occluder");
    read_opt(o, "enabled", s.occluder.enabled);
    read_opt(o, "center_x", s.occluder.center_x);
    read_opt(o, "width", s.occluder.width);
    read_opt(o, "first_frame", s.occluder.first_frame);
    read_opt(o, "last_frame", s.occluder.last_frame);
  }
  return s;
}

json to_json(const Config& cfg) {
  json stages = json::array();
  for (const BackboneStage& st : cfg.model.backbone.stages) stages.push_back(stage_to_json(st));
  const TrainConfig& t = cfg.train;
  return json{
      {"backbone",
       {{"stages", stages},
        {"template_size", cfg.model.backbone.template_size},
        {"search_size", cfg.model.backbone.search_size},
        {"frozen_stages", cfg.model.backbone.frozen_stages}}},
      {"apn",
       {{"channels", cfg.model.apn.channels},
        {"ffn_hidden", cfg.model.apn.ffn_hidden},
        {"anchor_base", cfg.model.apn.anchor_base}}},
      {"aan", {{"ffn_hidden", cfg.model.aan.ffn_hidden}}},
      {"loss",
       {{"w1", cfg.loss.w1},
        {"w2", cfg.loss.w2},
        {"w3", cfg.loss.w3},
        {"alpha", cfg.loss.alpha},
        {"t_pos", cfg.thresholds.t_pos},
        {"t_neg", cfg.thresholds.t_neg}}},
      {"tracker",
       {{"window_influence", cfg.tracker.window_influence},
        {"penalty_k", cfg.tracker.penalty_k},
        {"context_amount", cfg.tracker.context_amount},
        {"size_lr", cfg.tracker.size_lr}}},
      {"train",
       {{"seed", t.seed},
        {"init_seed", t.init_seed},
        {"steps", t.steps},
        {"batch_size", t.batch_size},
        {"num_triples", t.num_triples},
        {"lr", t.lr},
        {"momentum", t.momentum},
        {"weight_decay", t.weight_decay},
        {"max_grad_norm", t.max_grad_norm},
        {"warmup_steps", t.warmup_steps},
        {"lr_milestones", t.lr_milestones},
        {"lr_decay", t.lr_decay},
        {"max_shift", t.max_shift},
        {"scale_jitter", t.scale_jitter},
        {"sequence_seed", t.sequence_seed},
        {"sequence", to_json(t.sequence)}}},
  };
}

Config config_from_json(const json& j, const Config& base) {
  Config cfg = base;
  if (j.contains("backbone")) {
    const json& b = j.at("backbone");
    if (b.contains("widths")) {
      const std::size_t frozen = cfg.model.backbone.frozen_stages;
      cfg.model.backbone = BackboneConfig::alexnet_with_widths(b.at("widths").get<std::vector<std::size_t>>());
      cfg.model.backbone.frozen_stages = frozen;
    }
    if (b.contains("stages")) {
      cfg.model.backbone.stages.clear();
      for (const json& st : b.at("stages")) cfg.model.backbone.stages.push_back(stage_from_json(st));
    }
    read_opt(b, "template_size", cfg.model.backbone.template_size);
    read_opt(b, "search_size", cfg.model.backbone.search_size);
    read_opt(b, "frozen_stages", cfg.model.backbone.frozen_stages);
  }
  if (j.contains("apn")) {
    const json& a = j.at("apn");
    read_opt(a, "channels", cfg.model.apn.channels);
    read_opt(a, "ffn_hidden", cfg.model.apn.ffn_hidden);
    read_opt(a, "anchor_base", cfg.model.apn.anchor_base);
  }
  if (j.contains("aan")) read_opt(j.at("aan"), "ffn_hidden", cfg.model.aan.ffn_hidden);
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    read_opt(l, "w1", cfg.loss.w1);
    read_opt(l, "w2", cfg.loss.w2);
    read_opt(l, "w3", cfg.loss.w3);
    read_opt(l, "alpha", cfg.loss.alpha);
    read_opt(l, "t_pos", cfg.thresholds.t_pos);
    read_opt(l, "t_neg", cfg.thresholds.t_neg);
  }
  if (j.contains("tracker")) {
    const json& t = j.at("tracker");
    read_opt(t, "window_influence", cfg.tracker.window_influence);
    read_opt(t, "penalty_k", cfg.tracker.penalty_k);
    read_opt(t, "context_amount", cfg.tracker.context_amount);
    read_opt(t, "size_lr", cfg.tracker.size_lr);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    TrainConfig& tr = cfg.train;
    read_opt(t, "seed", tr.seed);
    read_opt(t, "init_seed", tr.init_seed);
    read_opt(t, "steps", tr.steps);
    read_opt(t, "batch_size", tr.batch_size);
    read_opt(t, "num_triples", tr.num_triples);
    read_opt(t, "lr", tr.lr);
    read_opt(t, "momentum", tr.momentum);
    read_opt(t, "weight_decay", tr.weight_decay);
    read_opt(t, "max_grad_norm", tr.max_grad_norm);
    read_opt(t, "warmup_steps", tr.warmup_steps);
    read_opt(t, "lr_milestones", tr.lr_milestones);
    read_opt(t, "lr_decay", tr.lr_decay);
    read_opt(t, "max_shift", tr.max_shift);
    read_opt(t, "scale_jitter", tr.scale_jitter);
    read_opt(t, "sequence_seed", tr.sequence_seed);
    if (t.contains("sequence")) tr.sequence = sequence_spec_from_json(t.at("sequence"));
  }
  cfg.validate();
  return cfg;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return json::parse(in);
}

Config load_config(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  const Config base = j.value("preset", std::string("default")) == "desk_scale"
                          ? Config::desk_scale()
                          : Config::defaults();
  return config_from_json(j, base);
}

}  // namespace siamapn
