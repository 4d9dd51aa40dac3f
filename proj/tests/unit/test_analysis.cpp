// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "sparx/analysis/analysis.hpp"
#include "sparx/common/error.hpp"
#include "sparx_tools/checks.hpp"
#include "test_util.hpp"

namespace sparx::analysis {
namespace {

using testing::randn;

Tensor matmul_plain(const Tensor& a, const Tensor& b) { return matmul(Var::borrow(a), Var::borrow(b)).value(); }

TEST(Cka, CenteringRemovesColumnMean) {
  auto m = center(Tensor({3, 2}, {1, 10, 2, 20, 3, 30}));
  EXPECT_TRUE(m.centered);
  EXPECT_EQ(m.data, Tensor({3, 2}, {-1, -10, 0, 0, 1, 10}));
  EXPECT_THROW(center(Tensor({1, 4})), ConfigError);
}

TEST(Cka, SelfSimilarityAndSymmetry) {
  Tensor a = randn({20, 7}, 1), b = randn({20, 5}, 2);
  auto ca = center(a), cb = center(b);
  EXPECT_NEAR(cka_linear(ca, ca), 1.0, 1e-12);
  EXPECT_EQ(cka_linear(ca, cb), cka_linear(cb, ca));
  double v = cka_linear(ca, cb);
  EXPECT_GE(v, 0.0);
  EXPECT_LE(v, 1.0);
}

TEST(Cka, OrthogonalAndScaleInvariance) {
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    Tensor a = randn({30, 8}, seed);
    Tensor q = tools::random_orthogonal(8, seed + 10);
    Tensor aq = matmul_plain(a, q);
    for (auto& v : aq.data()) v *= 3.5;
    EXPECT_NEAR(cka_linear(center(a), center(aq)), 1.0, 1e-6) << seed;
  }
}

// Linear CKA of independent Gaussians concentrates near d / (n + d).
TEST(Cka, IndependentNoiseSitsAtNullLevel) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Tensor a = randn({64, 32}, 100 + seed), b = randn({64, 32}, 200 + seed);
    EXPECT_NEAR(cka_linear(center(a), center(b)), 32.0 / 96.0, 0.05) << seed;
    Tensor c = randn({256, 32}, 300 + seed), d = randn({256, 32}, 400 + seed);
    EXPECT_LT(cka_linear(center(c), center(d)), 0.3) << seed;
  }
}

TEST(Cka, RequiresCenteredInputs) {
  FeatureMatrix raw{randn({5, 3}, 6), false};
  EXPECT_THROW(cka_linear(raw, raw), ConfigError);
}

TEST(Cka, ZeroVarianceIsAnError) {
  auto flat = center(Tensor::full({6, 3}, 2.0));
  auto other = center(randn({6, 3}, 7));
  EXPECT_THROW(cka_linear(flat, other), NumericError);
}

TEST(CkaMatrix, IdenticalLayersGiveOnes) {
  auto l = center(randn({10, 6}, 8));
  Tensor m = cka_matrix({l, l});
  for (double v : m.data()) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(CkaMatrix, SymmetricUnitDiagonal) {
  std::vector<FeatureMatrix> layers;
  for (std::uint64_t s = 0; s < 4; ++s) layers.push_back(center(randn({12, 3 + s}, 9 + s)));
  Tensor m = cka_matrix(layers);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(m.at({i, i}), 1.0, 1e-12);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(m.at({i, j}), m.at({j, i}), 1e-12);
  }
}

TEST(CkaMatrix, MismatchedExampleCountsThrow) {
  EXPECT_ANY_THROW(cka_matrix({center(randn({8, 3}, 13)), center(randn({9, 3}, 14))}));
}

TEST(CkaMatrix, CsvIsDeterministic) {
  auto m = cka_matrix({center(randn({8, 3}, 15)), center(randn({8, 4}, 16))});
  std::string a = matrix_csv(m, {"s1.l1", "s1.l2"});
  EXPECT_EQ(a, matrix_csv(m, {"s1.l1", "s1.l2"}));
  EXPECT_EQ(a.rfind("layer,s1.l1,s1.l2\n", 0), 0u);
  EXPECT_NE(a.find("s1.l1,1.000000,"), std::string::npos);
}

TEST(CkaMatrix, FeatureMatrixFlattensExamples) {
  std::vector<Tensor> ex{Tensor({2, 2}, {1, 2, 3, 4}), Tensor({2, 2}, {5, 6, 7, 8})};
  auto fm = feature_matrix(ex);
  EXPECT_EQ(fm.data.shape(), (Shape{2, 4}));
  EXPECT_TRUE(fm.centered);
  EXPECT_EQ(fm.data.at({0, 0}), -2.0);
}

std::vector<Tensor> images(std::size_t n, std::size_t side, std::uint64_t seed) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(randn({2, side, side}, seed + i));
  return out;
}

TEST(Erf, SingleConvFootprint) {
  Tensor k = randn({2, 3, 3}, 20);
  auto fn = [&](Tape*, const Var& x) { return dwconv3x3_pad1(x, Var::borrow(k)); };
  auto e = erf_of(fn, images(3, 9, 21));
  EXPECT_EQ(e.support(), 9u);
  EXPECT_EQ(e.support_extent(), (std::pair<std::size_t, std::size_t>{3, 3}));
  for (std::size_t y = 0; y < 9; ++y)
    for (std::size_t x = 0; x < 9; ++x) {
      bool inside = y >= 3 && y <= 5 && x >= 3 && x <= 5;
      EXPECT_EQ(e.map.at({y, x}) > 1e-6, inside) << y << "," << x;
    }
}

TEST(Erf, StackedConvFootprint) {
  Tensor k1 = randn({2, 3, 3}, 22), k2 = randn({2, 3, 3}, 23);
  auto fn = [&](Tape*, const Var& x) {
    return dwconv3x3_pad1(gelu(dwconv3x3_pad1(x, Var::borrow(k1))), Var::borrow(k2));
  };
  auto e = erf_of(fn, images(2, 11, 24));
  EXPECT_EQ(e.support(), 25u);
  EXPECT_EQ(e.support_extent(), (std::pair<std::size_t, std::size_t>{5, 5}));
}

TEST(Erf, NormalizedAndDeterministic) {
  Tensor k = randn({2, 3, 3}, 25);
  auto fn = [&](Tape*, const Var& x) { return dwconv3x3_pad1(x, Var::borrow(k)); };
  auto a = erf_of(fn, images(2, 7, 26)), b = erf_of(fn, images(2, 7, 26));
  EXPECT_EQ(a.map, b.map);
  double mx = 0;
  for (double v : a.map.data()) {
    EXPECT_GE(v, 0.0);
    mx = std::max(mx, v);
  }
  EXPECT_DOUBLE_EQ(mx, 1.0);
  EXPECT_DOUBLE_EQ(a.map.at({a.argmax_y, a.argmax_x}), 1.0);
}

TEST(Erf, DeeperStageCoversShallowerStage) {
  auto cfg = model::variant("tiny-reduced");
  cfg.dtype = DType::F64;
  auto p = model::build(cfg, 27);
  std::vector<Tensor> imgs{randn({3, 64, 64}, 28)};
  auto s1 = erf(p, 1, imgs), s4 = erf(p, 4, imgs);
  std::size_t violations = 0;
  for (std::size_t i = 0; i < s1.map.numel(); ++i)
    if (s1.map[i] > 1e-6 && !(s4.map[i] > 1e-6)) ++violations;
  EXPECT_EQ(violations, 0u);
  EXPECT_GE(s4.support(), s1.support());
  EXPECT_THROW(erf(p, 5, imgs), ConfigError);
  EXPECT_THROW(erf(p, 0, imgs), ConfigError);
}

TEST(Erf, PgmRendering) {
  std::string pgm = to_pgm(Tensor({2, 3}, {0, 0.5, 1, 1, 0.5, 0}));
  ASSERT_EQ(pgm.rfind("P5\n3 2\n255\n", 0), 0u);
  EXPECT_EQ(pgm.size(), std::string("P5\n3 2\n255\n").size() + 6);
  EXPECT_EQ(static_cast<unsigned char>(pgm.back()), 0u);
  EXPECT_EQ(static_cast<unsigned char>(pgm[pgm.size() - 4]), 255u);
}

topo::StageTopologyConfig stage(std::size_t n, std::size_t s, std::size_t m, topo::ConnectivityMode mode) {
  topo::StageTopologyConfig c;
  c.num_layers = n;
  c.stride_s = s;
  c.window_m = m;
  c.mode = mode;
  return c;
}

TEST(CostModel, PlainBaseline) {
  auto c = cost_model(stage(7, 2, 3, topo::ConnectivityMode::Plain), 100);
  EXPECT_EQ(c.peak_features, 1u);
  EXPECT_EQ(c.peak_bytes, 100u);
  EXPECT_EQ(c.concat_macs, 0u);
}

TEST(CostModel, DenseVariantsCostMore) {
  auto sp = cost_model(stage(7, 2, 3, topo::ConnectivityMode::Sparx), 1);
  auto dg = cost_model(stage(7, 2, 3, topo::ConnectivityMode::Dgc), 1);
  auto ds = cost_model(stage(7, 2, 3, topo::ConnectivityMode::Dsn), 1);
  EXPECT_LT(sp.peak_features, dg.peak_features);
  EXPECT_LE(dg.peak_features, ds.peak_features);
  EXPECT_LT(sp.training_features, dg.training_features);
  EXPECT_LT(dg.training_features, ds.training_features);
  EXPECT_LT(sp.concat_macs, dg.concat_macs);
  EXPECT_LT(dg.concat_macs, ds.concat_macs);
}

TEST(CostModel, ConcatMacsGrowWithWindow) {
  std::vector<std::uint64_t> macs;
  for (std::size_t m = 1; m <= 4; ++m) macs.push_back(cost_model(stage(12, 2, m, topo::ConnectivityMode::Sparx), 1).concat_macs);
  EXPECT_EQ(macs, (std::vector<std::uint64_t>{17661952, 24084480, 28901376, 32112640}));
  for (std::size_t i = 1; i < macs.size(); ++i) EXPECT_GT(macs[i], macs[i - 1]);
}

TEST(CostModel, AgreesWithScheduleOverSweep) {
  std::size_t checked = 0;
  for (auto mode : {topo::ConnectivityMode::Sparx, topo::ConnectivityMode::Dgc, topo::ConnectivityMode::Dsn,
                    topo::ConnectivityMode::Plain})
    for (std::size_t n = 1; n <= 12; ++n)
      for (std::size_t s = 1; s <= 4; ++s)
        for (std::size_t m = 1; m <= 4; ++m)
          for (bool cross : {false, true}) {
            auto cfg = stage(n, s, m, mode);
            cfg.has_cross_stage_input = cross && mode != topo::ConnectivityMode::Plain;
            auto sched = topo::cache_schedule(topo::plan_stage(cfg), 8);
            auto c = cost_model(cfg, 8);
            ASSERT_EQ(c.peak_features, sched.peak_live_count);
            ASSERT_EQ(c.peak_bytes, sched.peak_live_bytes);
            ASSERT_EQ(c.training_features, sched.training_resident_count);
            ++checked;
          }
  EXPECT_EQ(checked, 4u * 12 * 4 * 4 * 2);
}

}  // namespace
}  // namespace sparx::analysis
