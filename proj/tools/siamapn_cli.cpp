#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "siamapn/checkpoint.hpp"
#include "siamapn/config.hpp"
#include "siamapn/gradcheck.hpp"
#include "siamapn/metrics.hpp"
#include "siamapn/model.hpp"
#include "siamapn/sequence.hpp"
#include "siamapn/tape.hpp"
#include "siamapn/tracker.hpp"
#include "siamapn/train.hpp"

using namespace siamapn;

namespace {

void print_shape(const char* name, const Tensor& t) {
  std::printf("%-16s %s\n", name, shape_str(t.shape()).c_str());
}

int cmd_gradcheck(std::size_t cases, std::uint64_t seed) {
  GradcheckOptions opt;
  opt.cases = cases;
  opt.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = run_gradcheck_suite(opt, &std::cout);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::size_t failed = 0;
  for (const auto& r : results) failed += !r.passed;
  std::printf("%zu checks, %zu failed, %.1f s\n", results.size(), failed, secs);
  return failed == 0 ? 0 : 1;
}

int cmd_forward(const std::string& config_path) {
  const Config cfg = load_config(config_path);
  SiamApnPP model(cfg.model);
  model.init(cfg.train.init_seed);
  const SyntheticSequence seq = gen_sequence(cfg.train.sequence_seed, cfg.train.sequence);
  const BackboneConfig& bb = cfg.model.backbone;
  const CropRegion zr = template_region(seq.gt[0], cfg.tracker.context_amount);
  const CropRegion xr =
      search_region(seq.gt[0], cfg.tracker.context_amount, bb.template_size, bb.search_size);
  const Image& f = seq.frames[0];
  const Tensor z = crop_to_tensor(f, zr.cx, zr.cy, zr.side, bb.template_size, f.channel_mean());
  const Tensor x = crop_to_tensor(f, xr.cx, xr.cy, xr.side, bb.search_size, f.channel_mean());

  NoGradScope no_grad;
  const FeaturePair zf = model.backbone().extract(z);
  const FeaturePair xf = model.backbone().extract(x);
  const ForwardResult out = model.forward(zf, xf);
  print_shape("template", z);
  print_shape("search", x);
  print_shape("z.f4", zf.f4);
  print_shape("z.f5", zf.f5);
  print_shape("x.f4", xf.f4);
  print_shape("x.f5", xf.f5);
  print_shape("apn.r4", out.fused.r4);
  print_shape("apn.r5", out.fused.r5);
  print_shape("apn.ra", out.fused.ra);
  print_shape("anchors", out.anchors.boxes);
  print_shape("aan.r5prime", out.aan.r5prime);
  print_shape("aan.rs", out.aan.rs);
  print_shape("aan.rc", out.aan.rc);
  print_shape("aan.r", out.aan.r);
  print_shape("head.cls1", out.heads.cls1);
  print_shape("head.cls2", out.heads.cls2);
  print_shape("head.cls3", out.heads.cls3);
  print_shape("head.reg", out.heads.reg);
  std::printf("parameters       %zu\n", model.params().count());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out, const std::string& log) {
  const Config cfg = load_config(config_path);
  const auto t0 = std::chrono::steady_clock::now();
  const SyntheticSequence seq = gen_sequence(cfg.train.sequence_seed, cfg.train.sequence);
  const std::vector<Triple> triples = make_triples(seq, cfg);
  SiamApnPP model(cfg.model);
  model.init(cfg.train.init_seed);
  std::ofstream csv(log, std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write " + log);
  const auto steps = train_toy(model, triples, cfg, &csv);
  save_checkpoint(out, model, cfg);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!steps.empty()) {
    std::printf("steps %zu  loss %.6f -> %.6f  %.1f s\n", steps.size(), steps.front().total,
                steps.back().total, secs);
  }
  return 0;
}

int cmd_track(const std::string& ckpt, const std::string& seq_dir, const std::string& out) {
  const LoadedCheckpoint loaded = load_checkpoint(ckpt);
  const LoadedSequence seq = read_sequence(seq_dir);
  if (seq.gt.empty()) throw std::runtime_error("sequence has no groundtruth.txt for frame 1");
  const auto pred = track_sequence(*loaded.model, loaded.config.tracker, seq.frames, seq.gt[0]);
  write_boxes(out, pred);
  std::printf("tracked %zu frames\n", pred.size());
  return 0;
}

int cmd_eval(const std::string& pred, const std::string& gt, const std::string& json_out) {
  const OpeResult r = eval_ope(read_boxes(pred), read_boxes(gt));
  std::ofstream out(json_out);
  if (!out) throw std::runtime_error("cannot write " + json_out);
  out << to_json(r).dump(2) << '\n';
  std::printf("precision@20 %.4f  success_auc %.4f\n", r.precision_at_20, r.success_auc);
  return 0;
}

int cmd_gen(std::uint64_t seed, const std::string& spec_path, const std::string& out) {
  const SequenceSpec spec = sequence_spec_from_json(read_json_file(spec_path));
  const SyntheticSequence seq = gen_sequence(seed, spec);
  write_sequence(out, seq);
  std::printf("wrote %zu frames to %s\n", seq.frames.size(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SiamAPN++ desk-scale tracker"};
  app.require_subcommand(1);

  std::size_t cases = 20;
  std::uint64_t gc_seed = GradcheckOptions{}.seed;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gradcheck->add_option("--cases", cases, "random cases per check");
  gradcheck->add_option("--seed", gc_seed, "case generator seed");

  std::string config_path;
  auto* forward = app.add_subcommand("forward", "one forward pass, print intermediate shapes");
  forward->add_option("--config", config_path)->required()->check(CLI::ExistingFile);

  std::string out, log;
  auto* train = app.add_subcommand("train-toy", "train on synthetic triples");
  train->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "checkpoint path")->required();
  train->add_option("--log", log, "loss CSV path")->required();

  std::string ckpt, seq_dir;
  auto* track = app.add_subcommand("track", "track a sequence directory");
  track->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  track->add_option("--seq", seq_dir)->required()->check(CLI::ExistingDirectory);
  track->add_option("--out", out, "pred.txt path")->required();

  std::string pred, gt, json_out;
  auto* eval = app.add_subcommand("eval", "one-pass evaluation");
  eval->add_option("--pred", pred)->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", gt)->required()->check(CLI::ExistingFile);
  eval->add_option("--json", json_out)->required();

  std::uint64_t seed = 0;
  std::string spec_path;
  auto* gen = app.add_subcommand("gen", "generate a synthetic sequence");
  gen->add_option("--seed", seed)->required();
  gen->add_option("--spec", spec_path)->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gradcheck) return cmd_gradcheck(cases, gc_seed);
    if (*forward) return cmd_forward(config_path);
    if (*train) return cmd_train(config_path, out, log);
    if (*track) return cmd_track(ckpt, seq_dir, out);
    if (*eval) return cmd_eval(pred, gt, json_out);
    if (*gen) return cmd_gen(seed, spec_path, out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
