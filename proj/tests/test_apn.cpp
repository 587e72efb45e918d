#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracle.hpp"
#include "siamapn/apn.hpp"
#include "siamapn/ops.hpp"
#include "siamapn/tape.hpp"

using namespace siamapn;

namespace {

void set_identity(const Conv& c) {
  Tensor w = c.weight, b = c.bias;
  std::fill(w.data_mut().begin(), w.data_mut().end(), 0.0);
  for (std::size_t i = 0; i < w.dim(0); ++i) w.data_mut()[i * w.dim(1) + i] = 1.0;
  std::fill(b.data_mut().begin(), b.data_mut().end(), 0.0);
}

void set_value(const Tensor& t, double v) {
  Tensor h = t;
  std::fill(h.data_mut().begin(), h.data_mut().end(), v);
}

FeaturePair random_features(std::size_t c4, std::size_t c5, std::size_t hw, Rng& rng) {
  return {oracle::random_tensor({1, c4, hw, hw}, rng), oracle::random_tensor({1, c5, hw, hw}, rng)};
}

}  // namespace

TEST(ApnDf, DefaultShapes) {
  ParameterSet ps;
  ApnDf apn(ps, ApnConfig{8, 2, 64.0}, 6, 5);
  Rng rng(1);
  apn.init(rng);
  const FeaturePair z = random_features(6, 5, 6, rng), x = random_features(6, 5, 26, rng);
  const FusedMap m = apn.forward(z, x);
  EXPECT_EQ(m.r4.shape(), (Shape{1, 8, 21, 21}));
  EXPECT_EQ(m.r5.shape(), (Shape{1, 8, 21, 21}));
  EXPECT_EQ(m.ra.shape(), (Shape{1, 8, 21, 21}));
}

TEST(ApnDf, ZeroTemplateGivesZeroR4) {
  ParameterSet ps;
  ApnDf apn(ps, ApnConfig{3, 2, 64.0}, 2, 2);
  Rng rng(2);
  apn.init(rng);
  const FeaturePair x = random_features(2, 2, 8, rng);
  const FeaturePair z{Tensor(Shape{1, 2, 3, 3}, 0.0), Tensor(Shape{1, 2, 3, 3}, 0.0)};
  const Tensor r4 = apn.compute_r4(z, x);
  for (double v : r4.data()) EXPECT_EQ(v, 0.0);
}

TEST(ApnDf, IdentityReductionsReduceToPlainCorrelation) {
  ParameterSet ps;
  ApnDf apn(ps, ApnConfig{1, 1, 64.0}, 1, 1);
  Rng rng(3);
  apn.init(rng);
  set_identity(apn.r4_reduce());
  set_identity(apn.r5_search());
  set_identity(apn.r5_template());
  const FeaturePair x = random_features(1, 1, 3, rng), z = random_features(1, 1, 2, rng);
  const oracle::Map r4 = oracle::dwxcorr(oracle::Map(x.f4), oracle::Map(z.f4));
  const oracle::Map r5 = oracle::dwxcorr(oracle::Map(x.f5), oracle::Map(z.f5));
  const Tensor got4 = apn.compute_r4(z, x), got5 = apn.compute_r5(z, x);
  EXPECT_EQ(r4.v, std::vector<double>(got4.data().begin(), got4.data().end()));
  EXPECT_EQ(r5.v, std::vector<double>(got5.data().begin(), got5.data().end()));
}

TEST(ApnDf, R5BranchConvsAreIndependent) {
  ParameterSet ps;
  ApnDf apn(ps, ApnConfig{3, 2, 64.0}, 3, 3);
  Rng rng(4);
  apn.init(rng);
  const FeaturePair x = random_features(3, 3, 6, rng), z = random_features(3, 3, 3, rng);
  const Tensor before = apn.compute_r5(z, x).detach();
  Tensor ws = apn.r5_search().weight, wt = apn.r5_template().weight;
  std::vector<double> tmp(ws.data().begin(), ws.data().end());
  std::copy(wt.data().begin(), wt.data().end(), ws.data_mut().begin());
  std::copy(tmp.begin(), tmp.end(), wt.data_mut().begin());
  EXPECT_GT(oracle::max_rel(std::vector<double>(before.data().begin(), before.data().end()),
                            apn.compute_r5(z, x).data()),
            1e-6);
}

TEST(ApnDf, FuseResidualIdentityAtZeroGammas) {
  ParameterSet ps;
  ApnDf apn(ps, ApnConfig{4, 2, 64.0}, 2, 2);
  Rng rng(5);
  apn.init(rng);
  Tensor r4 = oracle::random_tensor({2, 4, 3, 3}, rng), r5 = oracle::random_tensor({2, 4, 3, 3}, rng);
  const Tensor ra = apn.fuse(r4, r5);
  EXPECT_TRUE(std::equal(ra.data().begin(), ra.data().end(), r5.data().begin()));
}

TEST(ApnDf, FuseUnitChannelWeightsDoubles) {
  ParameterSet ps;
  ApnDf apn(ps, ApnConfig{3, 2, 64.0}, 2, 2);
  Rng rng(6);
  apn.init(rng);
  const Ffn& f = apn.fusion_ffn();
  set_value(f.fc2.weight, 0.0);
  set_value(f.fc2.bias, 1.0);
  set_value(apn.gamma1(), 1.0);
  Tensor r4 = oracle::random_tensor({1, 3, 4, 4}, rng), r5 = oracle::random_tensor({1, 3, 4, 4}, rng);
  const Tensor ra = apn.fuse(r4, r5);
  for (std::size_t i = 0; i < ra.numel(); ++i) EXPECT_EQ(ra.data()[i], 2.0 * r5.data()[i]);
}

TEST(ApnDf, FuseMatchesStraightLineOracle) {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = 1 + rng.below(4);
    ParameterSet ps;
    ApnDf apn(ps, ApnConfig{c, 1 + rng.below(3), 64.0}, 2, 2);
    apn.init(rng);
    const double g1 = rng.uniform(-1.5, 1.5), g2 = rng.uniform(-1.5, 1.5);
    set_value(apn.gamma1(), g1);
    set_value(apn.gamma2(), g2);
    const Shape s{1 + rng.below(2), c, 1 + rng.below(4), 1 + rng.below(4)};
    Tensor r4 = oracle::random_tensor(s, rng), r5 = oracle::random_tensor(s, rng);
    const oracle::Map want =
        oracle::gated(oracle::Map(r5), oracle::Map(r4), g1, g2, apn.fusion_ffn(), apn.fusion_cat());
    EXPECT_LT(oracle::max_rel(want, apn.fuse(r4, r5)), 1e-12);
  }
}

TEST(ApnDf, FuseRejectsShapeMismatch) {
  ParameterSet ps;
  ApnDf apn(ps, ApnConfig{2, 1, 64.0}, 2, 2);
  EXPECT_THROW(apn.fuse(Tensor(Shape{1, 2, 3, 3}), Tensor(Shape{1, 2, 4, 3})), ShapeError);
}

TEST(Anchors, ZeroRawGivesGridCentersAndBase) {
  const AnchorGeometry g{8, 287, 64.0};
  const AnchorSet a = decode_anchors(Tensor(Shape{1, 4, 21, 21}, 0.0), g);
  const std::size_t hw = 441;
  for (std::size_t i = 0; i < 21; ++i) {
    for (std::size_t j = 0; j < 21; ++j) {
      const std::size_t c = i * 21 + j;
      EXPECT_DOUBLE_EQ(a.boxes.data()[c], 143.5 + 8.0 * (static_cast<double>(j) - 10.0));
      EXPECT_DOUBLE_EQ(a.boxes.data()[hw + c], 143.5 + 8.0 * (static_cast<double>(i) - 10.0));
      EXPECT_EQ(a.boxes.data()[2 * hw + c], 64.0);
      EXPECT_EQ(a.boxes.data()[3 * hw + c], 64.0);
    }
  }
  EXPECT_EQ(a.map_h, 21u);
  EXPECT_EQ(a.stride, 8u);
}

TEST(Anchors, LogTwoDoublesWidth) {
  Tensor raw(Shape{1, 4, 1, 1}, {0, 0, std::numbers::ln2, 0});
  const AnchorSet a = decode_anchors(raw, AnchorGeometry{8, 287, 64.0});
  EXPECT_DOUBLE_EQ(a.boxes.data()[2], 128.0);
}

TEST(Anchors, MatchesPerCellDecodeOracle) {
  Rng rng(8);
  const AnchorGeometry g{8, 287, 64.0};
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.below(21);
    Tensor raw = oracle::random_tensor({1, 4, m, m}, rng, -3.0, 3.0);
    const AnchorSet a = decode_anchors(raw, g);
    const std::size_t hw = m * m;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        const std::size_t c = i * m + j;
        const double* r = raw.data().data();
        const double gx = 287.0 / 2 + (static_cast<double>(j) - (m - 1) / 2.0) * 8.0;
        const double gy = 287.0 / 2 + (static_cast<double>(i) - (m - 1) / 2.0) * 8.0;
        EXPECT_DOUBLE_EQ(a.boxes.data()[c], std::clamp(gx + 8.0 * r[c], 0.0, 286.0));
        EXPECT_DOUBLE_EQ(a.boxes.data()[hw + c], std::clamp(gy + 8.0 * r[hw + c], 0.0, 286.0));
        EXPECT_DOUBLE_EQ(a.boxes.data()[2 * hw + c], std::clamp(64.0 * std::exp(r[2 * hw + c]), 1.0, 287.0));
        EXPECT_DOUBLE_EQ(a.boxes.data()[3 * hw + c], std::clamp(64.0 * std::exp(r[3 * hw + c]), 1.0, 287.0));
      }
    }
  }
}

TEST(Anchors, InvariantsHoldForExtremeRaw) {
  const AnchorGeometry g{8, 287, 64.0};
  for (double v : {-50.0, 50.0}) {
    const AnchorSet a = decode_anchors(Tensor(Shape{1, 4, 21, 21}, v), g);
    const std::size_t hw = 441;
    for (std::size_t c = 0; c < hw; ++c) {
      EXPECT_GE(a.boxes.data()[c], 0.0);
      EXPECT_LT(a.boxes.data()[c], 287.0);
      EXPECT_GE(a.boxes.data()[hw + c], 0.0);
      EXPECT_LT(a.boxes.data()[hw + c], 287.0);
      EXPECT_GT(a.boxes.data()[2 * hw + c], 0.0);
      EXPECT_GT(a.boxes.data()[3 * hw + c], 0.0);
      EXPECT_TRUE(std::isfinite(a.boxes.data()[2 * hw + c]));
    }
  }
}

TEST(ApnDf, GradientsReachGammasAndBothReductions) {
  ParameterSet ps;
  ApnDf apn(ps, ApnConfig{3, 2, 64.0}, 3, 3);
  Rng rng(9);
  apn.init(rng);
  set_value(apn.gamma1(), 0.5);
  set_value(apn.gamma2(), 0.5);
  const FeaturePair x = random_features(3, 3, 6, rng), z = random_features(3, 3, 3, rng);
  Tape tape;
  {
    TapeScope scope(tape);
    const FusedMap m = apn.forward(z, x);
    tape.backward(sum(mul(m.ra, oracle::random_tensor(m.ra.shape(), rng))));
  }
  auto nonzero = [](const Tensor& t) {
    if (!t.has_grad()) return false;
    for (double g : t.grad())
      if (g != 0.0) return true;
    return false;
  };
  EXPECT_TRUE(nonzero(apn.gamma1()));
  EXPECT_TRUE(nonzero(apn.gamma2()));
  EXPECT_TRUE(nonzero(apn.r4_reduce().weight));
  EXPECT_TRUE(nonzero(apn.r5_search().weight));
  EXPECT_TRUE(nonzero(apn.r5_template().weight));
}
