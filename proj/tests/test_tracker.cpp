#include <gtest/gtest.h>

#include <cmath>

#include "oracle.hpp"
#include "siamapn/sequence.hpp"
#include "siamapn/tracker.hpp"
#include "siamapn/train.hpp"

using namespace siamapn;

namespace {

Image symmetric_frame(std::size_t w, std::size_t h) {
  Image img(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t mx = std::min(x, w - 1 - x), my = std::min(y, h - 1 - y);
      for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<std::uint8_t>((mx * 7 + my * 3 + c * 50) % 256);
    }
  return img;
}

double at(const Tensor& t, std::size_t c, std::size_t y, std::size_t x) {
  const std::size_t s = t.dim(3);
  return t.data()[(c * s + y) * s + x];
}

}  // namespace

TEST(Crop, CenteredTargetGivesSymmetricCrop) {
  const Image img = symmetric_frame(200, 160);
  const Tensor crop = crop_to_tensor(img, 100.0, 80.0, 90.0, 127, img.channel_mean());
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 127; ++y)
      for (std::size_t x = 0; x < 127; ++x) {
        ASSERT_NEAR(at(crop, c, y, x), at(crop, c, y, 126 - x), 1e-12);
        ASSERT_NEAR(at(crop, c, y, x), at(crop, c, 126 - y, x), 1e-12);
      }
}

TEST(Crop, OutsideFrameReadsChannelMean) {
  Image img(40, 40);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i % 3 * 60 + i % 7);
  const auto mean = img.channel_mean();
  const Tensor far = crop_to_tensor(img, 500.0, 500.0, 50.0, 16, mean);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x) EXPECT_EQ(at(far, c, y, x), normalize_pixel(mean[c]));
  // Straddling the left border: the leftmost output column is entirely outside.
  const Tensor edge = crop_to_tensor(img, 0.0, 20.0, 40.0, 16, mean);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 16; ++y) EXPECT_EQ(at(edge, c, y, 0), normalize_pixel(mean[c]));
}

TEST(Crop, IdentityResampleAtUnitScale) {
  Image img(64, 64);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>((i * 37) % 251);
  const Tensor crop = crop_to_tensor(img, 32.0, 32.0, 64.0, 64, img.channel_mean());
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 64; ++y)
      for (std::size_t x = 0; x < 64; ++x) ASSERT_EQ(at(crop, c, y, x), normalize_pixel(img.at(x, y, c)));
}

TEST(CropGeometry, MatchesScalarOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const BBox b{rng.uniform(50, 300), rng.uniform(50, 300), rng.uniform(5, 120), rng.uniform(5, 120)};
    const double margin = (b.w + b.h) / 2.0;
    const double side = std::sqrt((b.w + margin) * (b.h + margin));
    const CropRegion t = template_region(b, 0.5);
    EXPECT_EQ(t.cx, b.cx);
    EXPECT_EQ(t.cy, b.cy);
    EXPECT_NEAR(t.side, side, 1e-12 * side);
    const CropRegion s = search_region(b, 0.5, 127, 287);
    EXPECT_NEAR(s.side, side * 287.0 / 127.0, 1e-12 * side);
    // Patch center maps to the region center; patch corner to the region corner.
    const BBox c = patch_to_frame(BBox{143.5, 143.5, 287, 287}, s, 287);
    EXPECT_NEAR(c.cx, b.cx, 1e-12 * b.cx);
    EXPECT_NEAR(c.w, s.side, 1e-12 * s.side);
    const BBox corner = patch_to_frame(BBox{0, 0, 1, 1}, s, 287);
    EXPECT_NEAR(corner.cx, b.cx - s.side / 2, 1e-9);
    EXPECT_NEAR(corner.cy, b.cy - s.side / 2, 1e-9);
  }
}

TEST(CosineWindow, PeaksAtCenterAndIsSymmetric) {
  const std::vector<double> w = cosine_window(21, 21);
  EXPECT_DOUBLE_EQ(w[10 * 21 + 10], 1.0);
  for (std::size_t i = 0; i < 21; ++i)
    for (std::size_t j = 0; j < 21; ++j) {
      EXPECT_NEAR(w[i * 21 + j], w[(20 - i) * 21 + (20 - j)], 1e-15);
      EXPECT_GT(w[i * 21 + j], 0.0);
      EXPECT_LE(w[i * 21 + j], 1.0);
    }
}

namespace {

TrackState state_for(const BBox& last, double lambda) {
  TrackState s;
  s.last_box = last;
  s.cfg.window_influence = lambda;
  s.frame_width = 400;
  s.frame_height = 400;
  s.initialized = true;
  return s;
}

SearchProposal random_proposal(Rng& rng) {
  SearchProposal p;
  p.h = p.w = 21;
  for (std::size_t i = 0; i < 441; ++i) {
    p.score.push_back(rng.uniform());
    p.boxes.push_back(BBox{rng.uniform(0, 287), rng.uniform(0, 287), rng.uniform(10, 100), rng.uniform(10, 100)});
  }
  return p;
}

}  // namespace

TEST(SelectCell, WindowOnlyPicksCenter) {
  Rng rng(2);
  const BBox last{200, 200, 40, 30};
  const CropRegion r = search_region(last, 0.5, 127, 287);
  for (int trial = 0; trial < 50; ++trial) {
    const Selection s = select_cell(random_proposal(rng), state_for(last, 1.0), r, 287);
    EXPECT_EQ(s.cell, 220u);
  }
}

TEST(SelectCell, ManufacturedScoreMapReturnsMappedBox) {
  Rng rng(3);
  const BBox last{200, 190, 40, 30};
  const CropRegion r = search_region(last, 0.5, 127, 287);
  TrackState st = state_for(last, 0.0);
  st.cfg.size_lr = 1.0;
  for (std::size_t k : {0u, 37u, 220u, 440u}) {
    SearchProposal p = random_proposal(rng);
    std::fill(p.score.begin(), p.score.end(), 0.0);
    p.score[k] = 1.0;
    p.boxes[k] = BBox{120.0 + k % 5, 150.0, 60.0, 50.0};
    const Selection s = select_cell(p, st, r, 287);
    ASSERT_EQ(s.cell, k);
    const double scale = r.side / 287.0;
    const BBox want{r.cx + (p.boxes[k].cx - 143.5) * scale, r.cy + (p.boxes[k].cy - 143.5) * scale,
                    60.0 * scale, 50.0 * scale};
    EXPECT_NEAR(s.box.cx, want.cx, 1e-12 * want.cx);
    EXPECT_NEAR(s.box.cy, want.cy, 1e-12 * want.cy);
    EXPECT_NEAR(s.box.w, want.w, 1e-12 * want.w);
    EXPECT_NEAR(s.box.h, want.h, 1e-12 * want.h);
  }
}

TEST(SelectCell, PenaltyPrefersUnchangedShape) {
  const BBox last{200, 200, 40, 40};
  const CropRegion r = search_region(last, 0.5, 127, 287);
  const double to_patch = 287.0 / r.side;
  SearchProposal p;
  p.h = 1;
  p.w = 2;
  p.score = {0.5, 0.5};
  p.boxes = {BBox{140, 140, 40 * to_patch * 2.0, 40 * to_patch}, BBox{150, 140, 40 * to_patch, 40 * to_patch}};
  TrackState st = state_for(last, 0.0);
  EXPECT_EQ(select_cell(p, st, r, 287).cell, 1u);
}

namespace {

struct TinyModel {
  Config cfg = Config::desk_scale();
  SiamApnPP model{cfg.model};
  TinyModel() { model.init(11); }
};

}  // namespace

TEST(Tracker, InitRejectsBadBoxes) {
  TinyModel m;
  Tracker t(m.model, m.cfg.tracker);
  const Image img(360, 360);
  EXPECT_THROW(t.init(img, BBox{100, 100, 0, 20}), std::invalid_argument);
  EXPECT_THROW(t.init(img, BBox{10, 100, 40, 20}), std::invalid_argument);
  EXPECT_THROW(t.init(img, BBox{100, 355, 20, 20}), std::invalid_argument);
  EXPECT_THROW(t.track(img), std::logic_error);
}

TEST(Tracker, CommitClampsIntoFrame) {
  TinyModel m;
  TrackerConfig tc = m.cfg.tracker;
  tc.size_lr = 1.0;
  Tracker t(m.model, tc);
  t.init(Image(360, 360), BBox{100, 100, 40, 40});
  const TrackResult r = t.commit(Selection{0, 1.0, BBox{-50, 400, 30, 1000}});
  EXPECT_EQ(r.box.w, 30.0);
  EXPECT_EQ(r.box.h, 360.0);
  EXPECT_EQ(r.box.cx, 15.0);
  EXPECT_EQ(r.box.cy, 180.0);
}

TEST(Tracker, BoxesStayInFrameAndRunsAreIdentical) {
  TinyModel m;
  SequenceSpec spec;
  spec.frames = 8;
  spec.initial = BBox{60, 300, 40, 40};
  spec.vx = 3.0;
  spec.vy = -4.0;
  const SyntheticSequence seq = gen_sequence(5, spec);
  const std::vector<BBox> a = track_sequence(m.model, m.cfg.tracker, seq.frames, seq.gt[0]);
  const std::vector<BBox> b = track_sequence(m.model, m.cfg.tracker, seq.frames, seq.gt[0]);
  ASSERT_EQ(a.size(), 8u);
  EXPECT_EQ(a[0], seq.gt[0]);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i], b[i]);
    EXPECT_GE(a[i].x0(), 0.0);
    EXPECT_GE(a[i].y0(), 0.0);
    EXPECT_LE(a[i].x1(), 360.0);
    EXPECT_LE(a[i].y1(), 360.0);
  }
}

TEST(Tracker, TemplateFeaturesFrozenAfterInit) {
  TinyModel m;
  SequenceSpec spec;
  spec.frames = 4;
  spec.vx = 2.0;
  const SyntheticSequence seq = gen_sequence(6, spec);
  Tracker t(m.model, m.cfg.tracker);
  t.init(seq.frames[0], seq.gt[0]);
  const auto f4_span = t.state().template_features.f4.data();
  const auto f5_span = t.state().template_features.f5.data();
  const std::vector<double> f4(f4_span.begin(), f4_span.end()), f5(f5_span.begin(), f5_span.end());
  for (std::size_t i = 1; i < 4; ++i) t.track(seq.frames[i]);
  const auto g4 = t.state().template_features.f4.data();
  const auto g5 = t.state().template_features.f5.data();
  EXPECT_EQ(std::vector<double>(g4.begin(), g4.end()), f4);
  EXPECT_EQ(std::vector<double>(g5.begin(), g5.end()), f5);
}

TEST(Tracker, TrainedModelHoldsStillOnIdentityVideo) {
  const Config cfg = load_config(SIAMAPN_TOY_CONFIG);
  const SyntheticSequence seq = gen_sequence(cfg.train.sequence_seed, cfg.train.sequence);
  SiamApnPP model(cfg.model);
  model.init(cfg.train.init_seed);
  train_toy(model, make_triples(seq, cfg), cfg);

  const std::vector<Image> still(100, seq.frames[0]);
  const std::vector<BBox> out = track_sequence(model, cfg.tracker, still, seq.gt[0]);
  double drift = 0.0;
  for (const BBox& b : out) drift = std::max(drift, center_error(b, seq.gt[0]));
  EXPECT_LT(drift, 2.0);
}
