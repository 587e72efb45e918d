// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "oracle.hpp"
#include "siamapn/aan.hpp"
#include "siamapn/apn.hpp"
#include "siamapn/config.hpp"
#include "siamapn/gradcheck.hpp"
#include "siamapn/heads.hpp"
#include "siamapn/metrics.hpp"
#include "siamapn/model.hpp"
#include "siamapn/ops.hpp"
#include "siamapn/sequence.hpp"
#include "siamapn/tape.hpp"
#include "siamapn/tracker.hpp"
#include "siamapn/train.hpp"

using namespace siamapn;
namespace fs = std::filesystem;

namespace {

constexpr double kGradcheckBudgetSeconds = 120.0;
constexpr double kIdentityTolerance = 1e-12;
constexpr double kOracleTolerance = 1e-10;
constexpr std::size_t kOracleCases = 100;
constexpr double kLossAtHalf = 0.346574;
constexpr double kLossAtHalfTolerance = 1e-6;
constexpr double kMinMeanIou = 0.5;
constexpr double kRequiredPrecision = 1.0;
constexpr double kToyBudgetSeconds = 600.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("criterion %d %-22s %s  %s\n", id, name, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

void set_scalar(const Tensor& t, double v) {
  Tensor h = t;
  h.data_mut()[0] = v;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double d = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
  return d;
}

// 1
void gradient_suite() {
  const auto t0 = Clock::now();
  const std::vector<GradcheckResult> results = run_gradcheck_suite(GradcheckOptions{});
  const double elapsed = seconds_since(t0);
  bool ok = elapsed < kGradcheckBudgetSeconds;
  double worst = 0.0;
  std::size_t min_cases = SIZE_MAX;
  std::string failed;
  for (const GradcheckResult& r : results) {
    worst = std::max(worst, r.max_rel_error);
    min_cases = std::min(min_cases, r.cases);
    if (!r.passed) {
      ok = false;
      failed += " " + r.name;
    }
  }
  ok = ok && min_cases >= 20;
  report(1, "gradient-suite", ok,
         std::to_string(results.size()) + " checks, >=" + std::to_string(min_cases) +
             " cases each, max rel err " + fmt("%.2e", worst) + ", " + fmt("%.2fs", elapsed) +
             (failed.empty() ? "" : ", failed:" + failed));
}

// 2
void identity_at_init() {
  double worst = 0.0;
  bool gammas_zero = true;
  for (const Config& cfg : {Config::desk_scale(), Config::defaults()}) {
    SiamApnPP model(cfg.model);
    model.init(cfg.train.init_seed);
    for (const Tensor* g : {&model.apn().gamma1(), &model.apn().gamma2(), &model.aan().gamma3(),
                            &model.aan().gamma4(), &model.aan().gamma5(), &model.aan().gamma6()}) {
      gammas_zero = gammas_zero && g->data()[0] == 0.0;
    }
    Rng rng(101);
    NoGradScope no_grad;
    const ForwardResult out = model.forward_images(oracle::random_tensor({1, 3, 127, 127}, rng),
                                                   oracle::random_tensor({1, 3, 287, 287}, rng));
    worst = std::max(worst, max_abs_diff(out.aan.r, out.aan.r5prime));
  }
  report(2, "identity-at-init", gammas_zero && worst < kIdentityTolerance,
         "max |R - R'5| " + fmt("%.1e", worst) + " (desk and default configs)");
}

// 3
struct OracleTally {
  std::string worst_name;
  double worst = 0.0;
  std::size_t min_cases = SIZE_MAX;

  void add(const std::string& name, std::size_t cases, double err) {
    min_cases = std::min(min_cases, cases);
    if (err >= worst) {
      worst = err;
      worst_name = name;
    }
  }
};

double label_oracle_error(Rng& rng) {
  const AnchorGeometry geo{8, 287, 64.0};
  const LabelThresholds thr{};
  const std::size_t m = 3 + rng.below(19), hw = m * m;
  const AnchorSet a = decode_anchors(oracle::random_tensor({1, 4, m, m}, rng, -0.8, 0.8), geo);
  const BBox gt{rng.uniform(60, 230), rng.uniform(60, 230), rng.uniform(20, 120), rng.uniform(20, 120)};
  const LabelAssignment lab = assign_labels(a, std::vector<BBox>{gt}, geo, thr);
  const double* b = a.boxes.data().data();
  double err = 0.0;
  for (std::size_t c = 0; c < hw; ++c) {
    const double u = oracle::iou({b[c], b[hw + c], b[2 * hw + c], b[3 * hw + c]}, {gt.cx, gt.cy, gt.w, gt.h});
    const int want1 = u >= thr.t_pos ? 1 : u <= thr.t_neg ? 0 : -1;
    const double x = 143.5 + (static_cast<double>(c % m) - 0.5 * static_cast<double>(m - 1)) * 8.0;
    const double y = 143.5 + (static_cast<double>(c / m) - 0.5 * static_cast<double>(m - 1)) * 8.0;
    const double l = x - (gt.cx - gt.w / 2), r = gt.cx + gt.w / 2 - x;
    const double t = y - (gt.cy - gt.h / 2), bo = gt.cy + gt.h / 2 - y;
    const bool inside = l >= 0 && r >= 0 && t >= 0 && bo >= 0;
    const double cn = inside ? std::sqrt(std::min(l, r) / std::max(l, r) * std::min(t, bo) / std::max(t, bo)) : 0.0;
    if (static_cast<int>(lab.cls1[c]) != want1 || lab.cls2[c] != (inside ? 1 : 0)) return INFINITY;
    err = std::max(err, std::abs(lab.cls3[c] - cn) / std::max(cn, 1.0));
    if (want1 == 1) {
      const BBox& rt = lab.reg_target[c];
      if (!(rt == gt)) return INFINITY;
    }
  }
  return err;
}

double ope_oracle_error(Rng& rng) {
  const std::size_t n = 5 + rng.below(60);
  std::vector<BBox> pred, gt;
  for (std::size_t i = 0; i < n; ++i) {
    const BBox g{rng.uniform(50, 300), rng.uniform(50, 300), rng.uniform(10, 80), rng.uniform(10, 80)};
    gt.push_back(g);
    pred.push_back(BBox{g.cx + rng.uniform(-30, 30), g.cy + rng.uniform(-30, 30),
                        g.w * rng.uniform(0.6, 1.5), g.h * rng.uniform(0.6, 1.5)});
  }
  const OpeResult r = eval_ope(pred, gt);
  std::vector<double> ious, cles;
  for (std::size_t i = 0; i < n; ++i) {
    const oracle::Box p{pred[i].cx, pred[i].cy, pred[i].w, pred[i].h}, g{gt[i].cx, gt[i].cy, gt[i].w, gt[i].h};
    ious.push_back(oracle::iou(p, g));
    cles.push_back(oracle::cle(p, g));
  }
  auto frac = [&](auto pred_fn) {
    double hit = 0;
    for (std::size_t i = 0; i < n; ++i) hit += pred_fn(i) ? 1.0 : 0.0;
    return hit / static_cast<double>(n);
  };
  double err = 0.0, auc = 0.0;
  for (int th = 0; th <= 50; ++th) {
    err = std::max(err, std::abs(r.precision_curve.at(th) - frac([&](std::size_t i) { return cles[i] < th; })));
  }
  for (int k = 0; k <= 20; ++k) {
    const double s = frac([&](std::size_t i) { return ious[i] >= k / 20.0; });
    err = std::max(err, std::abs(r.success_curve.at(k) - s));
    auc += s / 21.0;
  }
  err = std::max(err, std::abs(r.success_auc - auc) / std::max(auc, 1e-300));
  err = std::max(err, std::abs(r.precision_at_20 - frac([&](std::size_t i) { return cles[i] < 20.0; })));
  return err;
}

void oracle_equivalence() {
  Rng rng(303);
  OracleTally tally;
  auto run = [&](const std::string& name, const std::function<double()>& one) {
    double worst = 0.0;
    for (std::size_t k = 0; k < kOracleCases; ++k) worst = std::max(worst, one());
    tally.add(name, kOracleCases, worst);
  };
  NoGradScope no_grad;

  run("dwxcorr", [&] {
    const std::size_t n = 1 + rng.below(2), c = 1 + rng.below(4), ht = 1 + rng.below(4), wt = 1 + rng.below(4);
    const Tensor s = oracle::random_tensor({n, c, ht + rng.below(6), wt + rng.below(6)}, rng);
    const Tensor t = oracle::random_tensor({n, c, ht, wt}, rng);
    return oracle::max_rel(oracle::dwxcorr(oracle::Map(s), oracle::Map(t)), dwxcorr(s, t));
  });
  run("iou", [&] {
    const BBox a{rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(0.1, 30), rng.uniform(0.1, 30)};
    const BBox b{rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(0.1, 30), rng.uniform(0.1, 30)};
    const double want = oracle::iou({a.cx, a.cy, a.w, a.h}, {b.cx, b.cy, b.w, b.h});
    const double got = iou(a, b);
    return want > 0.0 ? std::abs(got - want) / want : std::abs(got);
  });
  run("labels", [&] { return label_oracle_error(rng); });
  run("fuse", [&] {
    const std::size_t c = 1 + rng.below(4);
    ParameterSet ps;
    ApnDf apn(ps, ApnConfig{c, 1 + rng.below(3), 64.0}, 2, 2);
    apn.init(rng);
    const double g1 = rng.uniform(-1.5, 1.5), g2 = rng.uniform(-1.5, 1.5);
    set_scalar(apn.gamma1(), g1);
    set_scalar(apn.gamma2(), g2);
    const Shape s{1 + rng.below(2), c, 1 + rng.below(4), 1 + rng.below(4)};
    const Tensor r4 = oracle::random_tensor(s, rng), r5 = oracle::random_tensor(s, rng);
    return oracle::max_rel(
        oracle::gated(oracle::Map(r5), oracle::Map(r4), g1, g2, apn.fusion_ffn(), apn.fusion_cat()),
        apn.fuse(r4, r5));
  });
  auto make_aan = [&](ParameterSet& ps, std::size_t c) {
    Aan aan(ps, AanConfig{1 + rng.below(3)}, c, c);
    aan.init(rng);
    return aan;
  };
  run("spatial", [&] {
    const std::size_t c = 1 + rng.below(4);
    ParameterSet ps;
    const Aan aan = make_aan(ps, c);
    const double g3 = rng.uniform(-2, 2);
    set_scalar(aan.gamma3(), g3);
    const Tensor r = oracle::random_tensor({1 + rng.below(2), c, 1 + rng.below(3), 1 + rng.below(3)}, rng);
    return oracle::max_rel(oracle::spatial(oracle::Map(r), aan.query(), aan.key(), aan.value(), g3),
                           aan.spatial_attention(r));
  });
  run("channel", [&] {
    const std::size_t c = 1 + rng.below(4);
    ParameterSet ps;
    const Aan aan = make_aan(ps, c);
    const double g4 = rng.uniform(-2, 2);
    set_scalar(aan.gamma4(), g4);
    const Tensor r = oracle::random_tensor({1 + rng.below(2), c, 1 + rng.below(4), 1 + rng.below(4)}, rng);
    return oracle::max_rel(oracle::channel(oracle::Map(r), aan.channel_ffn(), g4), aan.channel_attention(r));
  });
  run("cross-aan", [&] {
    const std::size_t c = 1 + rng.below(4);
    ParameterSet ps;
    const Aan aan = make_aan(ps, c);
    const double g5 = rng.uniform(-2, 2), g6 = rng.uniform(-2, 2);
    set_scalar(aan.gamma5(), g5);
    set_scalar(aan.gamma6(), g6);
    const Shape s{1 + rng.below(2), c, 1 + rng.below(4), 1 + rng.below(4)};
    const Tensor rc = oracle::random_tensor(s, rng), ra = oracle::random_tensor(s, rng);
    return oracle::max_rel(
        oracle::gated(oracle::Map(rc), oracle::Map(ra), g5, g6, aan.cross_ffn(), aan.cross_cat()),
        aan.cross_aan(rc, ra));
  });
  run("eval_ope", [&] { return ope_oracle_error(rng); });

  report(3, "oracle-equivalence", tally.worst < kOracleTolerance && tally.min_cases >= 100,
         "8 oracles x " + std::to_string(tally.min_cases) + " cases, worst " + fmt("%.1e", tally.worst) +
             " (" + tally.worst_name + ")");
}

// 4
void loss_law() {
  bool ok = l_ious(1.0, 1.5) == 0.0 && l_ious(1.0, 1.1) == 0.0 && l_ious(1.0, 2.0) == 0.0;
  std::size_t violations = 0;
  for (double alpha : {1.1, 1.5, 2.0}) {
    for (int k = 1; k < 99; ++k) {
      if (!(l_ious((k + 1) / 100.0, alpha) < l_ious(k / 100.0, alpha))) ++violations;
    }
  }
  const double half = l_ious(0.5, 1.5);
  ok = ok && violations == 0 && std::abs(half - kLossAtHalf) <= kLossAtHalfTolerance;
  report(4, "loss-law", ok,
         "L(1)=0, " + std::to_string(violations) + " monotonicity violations, L(0.5,1.5)=" +
             fmt("%.9f", half));
}

// 5
struct ShapeRun {
  bool ok = false;
  std::string detail;
  std::vector<double> heads;
};

ShapeRun shape_contract() {
  const Config cfg = Config::defaults();
  SiamApnPP model(cfg.model);
  model.init(cfg.train.init_seed);
  Rng rng(505);
  NoGradScope no_grad;
  const Tensor z = oracle::random_tensor({1, 3, 127, 127}, rng);
  const Tensor x = oracle::random_tensor({1, 3, 287, 287}, rng);
  const FeaturePair zf = model.backbone().extract(z), xf = model.backbone().extract(x);
  const ForwardResult out = model.forward(zf, xf);
  auto sp = [](const Tensor& t, std::size_t h) { return t.dim(2) == h && t.dim(3) == h; };
  ShapeRun run;
  run.ok = sp(zf.f4, 6) && sp(zf.f5, 6) && sp(xf.f4, 26) && sp(xf.f5, 26) && sp(out.fused.ra, 21) &&
           sp(out.anchors.boxes, 21) && sp(out.aan.r, 21) && sp(out.heads.cls1, 21) &&
           sp(out.heads.cls2, 21) && sp(out.heads.cls3, 21) && sp(out.heads.reg, 21) &&
           out.heads.cls1.dim(1) == 2 && out.heads.cls2.dim(1) == 2 && out.heads.cls3.dim(1) == 1 &&
           out.heads.reg.dim(1) == 4;
  run.detail = "127 -> " + std::to_string(zf.f5.dim(2)) + "x" + std::to_string(zf.f5.dim(3)) + ", 287 -> " +
               std::to_string(xf.f5.dim(2)) + "x" + std::to_string(xf.f5.dim(3)) + ", heads " +
               std::to_string(out.heads.cls1.dim(2)) + "x" + std::to_string(out.heads.cls1.dim(3)) + ", " +
               std::to_string(model.params().count()) + " parameters";
  for (const Tensor* t : {&out.heads.cls1, &out.heads.cls2, &out.heads.cls3, &out.heads.reg})
    run.heads.insert(run.heads.end(), t->data().begin(), t->data().end());
  return run;
}

// 6
struct ToyRun {
  std::string csv;
  std::string pred_txt;
  double mean_iou = 0.0;
  double precision_at_20 = 0.0;
  double success_auc = 0.0;
  double first_loss = 0.0;
  double last_loss = 0.0;
  double seconds = 0.0;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ToyRun toy_run(const Config& cfg, const fs::path& dir) {
  const auto t0 = Clock::now();
  const SyntheticSequence seq = gen_sequence(cfg.train.sequence_seed, cfg.train.sequence);
  const std::vector<Triple> triples = make_triples(seq, cfg);
  SiamApnPP model(cfg.model);
  model.init(cfg.train.init_seed);
  fs::create_directories(dir);
  std::vector<StepLog> log;
  {
    std::ofstream csv(dir / "loss.csv", std::ios::binary);
    log = train_toy(model, triples, cfg, &csv);
  }
  const std::vector<BBox> pred = track_sequence(model, cfg.tracker, seq.frames, seq.gt[0]);
  write_boxes(dir / "pred.txt", pred);
  ToyRun r;
  r.seconds = seconds_since(t0);
  r.csv = slurp(dir / "loss.csv");
  r.pred_txt = slurp(dir / "pred.txt");
  for (std::size_t i = 0; i < pred.size(); ++i) r.mean_iou += iou(pred[i], seq.gt[i]);
  r.mean_iou /= static_cast<double>(pred.size());
  const OpeResult ope = eval_ope(pred, seq.gt);
  r.precision_at_20 = ope.precision_at_20;
  r.success_auc = ope.success_auc;
  r.first_loss = log.front().total;
  r.last_loss = log.back().total;
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string config_path;
  std::string work_dir = (fs::temp_directory_path() / "siamapn_acceptance").string();
  app.add_option("--config", config_path, "toy experiment config")->required()->check(CLI::ExistingFile);
  app.add_option("--work", work_dir, "scratch directory for run artifacts");
  CLI11_PARSE(app, argc, argv);

  try {
    gradient_suite();
    identity_at_init();
    oracle_equivalence();
    loss_law();

    const ShapeRun s1 = shape_contract();
    report(5, "shape-contract", s1.ok, s1.detail);

    const Config cfg = load_config(config_path);
    fs::remove_all(work_dir);
    const ToyRun a = toy_run(cfg, fs::path(work_dir) / "run1");
    const bool ok6 = a.mean_iou > kMinMeanIou && a.precision_at_20 >= kRequiredPrecision &&
                     a.seconds < kToyBudgetSeconds;
    report(6, "toy-overfit-tracking", ok6,
           std::to_string(cfg.train.steps) + " steps, loss " + fmt("%.3f", a.first_loss) + " -> " +
               fmt("%.3f", a.last_loss) + ", mean IoU " + fmt("%.3f", a.mean_iou) + ", P@20 " +
               fmt("%.3f", a.precision_at_20) + ", AUC " + fmt("%.3f", a.success_auc) + ", " +
               fmt("%.1fs", a.seconds));

    const ShapeRun s2 = shape_contract();
    const ToyRun b = toy_run(cfg, fs::path(work_dir) / "run2");
    const bool ok7 = a.csv == b.csv && a.pred_txt == b.pred_txt && s1.heads == s2.heads && !a.csv.empty();
    report(7, "determinism", ok7,
           std::string("loss.csv ") + (a.csv == b.csv ? "identical" : "differs") + " (" +
               std::to_string(a.csv.size()) + " bytes), pred.txt " +
               (a.pred_txt == b.pred_txt ? "identical" : "differs") + ", forward " +
               (s1.heads == s2.heads ? "identical" : "differs"));
  } catch (const std::exception& e) {
    std::printf("error: %s\n", e.what());
    return 2;
  }
  std::printf("%s\n", failures == 0 ? "all criteria passed" : "some criteria failed");
  return failures == 0 ? 0 : 1;
}
