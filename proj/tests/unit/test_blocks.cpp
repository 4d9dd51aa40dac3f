// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "sparx/blocks/blocks.hpp"
#include "sparx/common/error.hpp"
#include "sparx_tools/checks.hpp"
#include "test_util.hpp"

namespace sparx::blocks {
namespace {

using testing::max_diff;
using testing::randn;

ParamFactory factory(std::uint64_t seed = 0) { return ParamFactory(Rng(seed), DType::F64); }

void zero_all(const std::function<void(const ParamVisitor&)>& visit) {
  visit([](const std::string&, Tensor& t) { t.fill(0.0); });
}

TEST(Dpe, ZeroKernelIsIdentity) {
  auto f = factory();
  auto p = Dpe::make(f, "dpe", 3);
  p.kernel.fill(0.0);
  Tensor x = randn({3, 4, 5}, 1);
  EXPECT_EQ(p(nullptr, Var::borrow(x)).value(), x);
}

TEST(Dpe, DeltaKernelDoubles) {
  auto f = factory();
  auto p = Dpe::make(f, "dpe", 2);
  p.kernel.fill(0.0);
  for (std::size_t c = 0; c < 2; ++c) p.kernel.at({c, 1, 1}) = 1.0;
  Tensor x = randn({2, 3, 3}, 2);
  Tensor out = p(nullptr, Var::borrow(x)).value();
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(out[i], 2.0 * x[i]);
}

TEST(Dpe, MatchesDirectConvolution) {
  auto f = factory();
  auto p = Dpe::make(f, "dpe", 2);
  p.kernel = randn({2, 3, 3}, 3);
  Tensor x = randn({2, 3, 3}, 4);
  Tensor out = p(nullptr, Var::borrow(x)).value();
  for (std::size_t c = 0; c < 2; ++c)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = x.at({c, std::size_t(i), std::size_t(j)});
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) {
            int y = i + a - 1, z = j + b - 1;
            if (y < 0 || y >= 3 || z < 0 || z >= 3) continue;
            s += p.kernel.at({c, std::size_t(a), std::size_t(b)}) * x.at({c, std::size_t(y), std::size_t(z)});
          }
        EXPECT_NEAR(out.at({c, std::size_t(i), std::size_t(j)}), s, 1e-12);
      }
}

TEST(SelectiveScan, HandUnrolledRecurrence) {
  auto one = [](double v) { return Var::constant(Tensor({1, 3}, {v, v, v})); };
  Var y = selective_scan(Var::constant(Tensor({1, 3}, {1, 0, 0})), one(1.0), Var::constant(Tensor({1, 1}, {-1.0})),
                         one(1.0), one(1.0), Var::constant(Tensor({1}, {0.0})));
  EXPECT_NEAR(y.value()[0], 1.0, 1e-4);
  EXPECT_NEAR(y.value()[1], 0.3679, 1e-4);
  EXPECT_NEAR(y.value()[2], 0.1353, 1e-4);
}

TEST(SelectiveScan, ZeroInputMatrixLeavesSkipPath) {
  auto f = factory();
  auto p = SsmParams::make(f, "ssm", 3, 4);
  p.proj_b.fill(0.0);
  p.d_skip = randn({3}, 5);
  Tensor x = randn({3, 6}, 6);
  Tensor y = selective_scan_1d(nullptr, Var::borrow(x), p).value();
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t t = 0; t < 6; ++t) EXPECT_NEAR(y.at({c, t}), p.d_skip[c] * x.at({c, t}), 1e-14);
}

TEST(SelectiveScan, InitHasStableDecay) {
  auto f = factory();
  auto p = SsmParams::make(f, "ssm", 16, 4);
  EXPECT_EQ(p.delta_down.shape(), (Shape{2, 16}));
  for (std::size_t c = 0; c < 16; ++c) {
    EXPECT_NEAR(p.a_log.at({c, 3}), std::log(4.0), 1e-12);
    double dt = std::log1p(std::exp(p.delta_bias[c]));
    EXPECT_GE(dt, 1e-3 - 1e-12);
    EXPECT_LE(dt, 1e-1 + 1e-12);
  }
}

TEST(ScanOrder, PositionsArePermutations) {
  for (auto order : {ScanOrder::RowForward, ScanOrder::RowReverse, ScanOrder::ColForward, ScanOrder::ColReverse}) {
    auto pos = scan_positions(order, 3, 4);
    std::vector<std::size_t> sorted = pos;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(sorted[i], i);
  }
  EXPECT_EQ(scan_positions(ScanOrder::ColForward, 2, 3), (std::vector<std::size_t>{0, 3, 1, 4, 2, 5}));
  EXPECT_EQ(scan_positions(ScanOrder::ColReverse, 2, 3), (std::vector<std::size_t>{5, 2, 4, 1, 3, 0}));
}

TEST(ScanOrder, SequenceRoundTrip) {
  Tensor x = randn({2, 3, 4}, 7);
  for (auto order : {ScanOrder::RowForward, ScanOrder::RowReverse, ScanOrder::ColForward, ScanOrder::ColReverse})
    EXPECT_EQ(from_sequence(to_sequence(Var::borrow(x), order), order, 3, 4).value(), x);
}

std::vector<SsmParams> four_dirs(std::size_t c, std::uint64_t seed) {
  auto f = factory(seed);
  std::vector<SsmParams> dirs;
  for (int d = 0; d < 4; ++d) dirs.push_back(SsmParams::make(f, "d" + std::to_string(d), c, 3));
  Rng rng(seed);
  for (auto& d : dirs)
    for (Tensor* t : {&d.proj_b, &d.proj_c, &d.delta_up})
      for (auto& v : t->data()) v += 0.5 * rng.normal();
  return dirs;
}

Tensor naive_ss2d(const Tensor& x, const std::vector<SsmParams>& dirs) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor total({c, h, w});
  const ScanOrder orders[] = {ScanOrder::RowForward, ScanOrder::RowReverse, ScanOrder::ColForward, ScanOrder::ColReverse};
  for (int d = 0; d < 4; ++d) {
    auto pos = scan_positions(orders[d], h, w);
    Tensor seq({c, h * w});
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t t = 0; t < h * w; ++t) seq[k * h * w + t] = x[k * h * w + pos[t]];
    Tensor y = selective_scan_1d(nullptr, Var::borrow(seq), dirs[d]).value();
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t t = 0; t < h * w; ++t) total[k * h * w + pos[t]] += y[k * h * w + t];
  }
  return total;
}

TEST(Ss2d, MatchesPermuteScanUnpermuteOracle) {
  auto dirs = four_dirs(2, 8);
  Tensor x = randn({2, 3, 4}, 9);
  EXPECT_LE(max_diff(ss2d_forward(nullptr, Var::borrow(x), dirs).value(), naive_ss2d(x, dirs)), 1e-12);
}

TEST(Ss2d, SingleTokenSumsFourScans) {
  auto dirs = four_dirs(3, 10);
  Tensor x = randn({3, 1, 1}, 11);
  Tensor seq = x.reshaped({3, 1});
  Tensor expect({3, 1});
  for (const auto& d : dirs) {
    Tensor y = selective_scan_1d(nullptr, Var::borrow(seq), d).value();
    for (std::size_t i = 0; i < 3; ++i) expect[i] += y[i];
  }
  EXPECT_LE(max_diff(ss2d_forward(nullptr, Var::borrow(x), dirs).value(), expect.reshaped({3, 1, 1})), 1e-14);
}

TEST(Ss2d, ZeroInputMatricesGiveFourSkips) {
  auto dirs = four_dirs(2, 12);
  for (auto& d : dirs) {
    d.proj_b.fill(0.0);
    d.d_skip = dirs[0].d_skip;
  }
  Tensor x = randn({2, 3, 3}, 13);
  Tensor y = ss2d_forward(nullptr, Var::borrow(x), dirs).value();
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y[i], 4.0 * dirs[0].d_skip[i / 9] * x[i], 1e-13);
}

TEST(Ss2d, InfluenceFollowsScanPrecedence) {
  const std::size_t h = 2, w = 3, n = h * w;
  auto dirs = four_dirs(1, 14);
  Tensor base = randn({1, h, w}, 15);
  const ScanOrder orders[] = {ScanOrder::RowForward, ScanOrder::RowReverse, ScanOrder::ColForward, ScanOrder::ColReverse};
  for (int d = 0; d < 4; ++d) {
    std::vector<SsmParams> only(4, dirs[d]);
    for (int e = 0; e < 4; ++e)
      if (e != d) {
        only[e].proj_c.fill(0.0);
        only[e].d_skip.fill(0.0);
      }
    auto pos = scan_positions(orders[d], h, w);
    std::vector<std::size_t> rank(n);
    for (std::size_t t = 0; t < n; ++t) rank[pos[t]] = t;
    for (std::size_t p = 0; p < n; ++p) {
      Tensor bumped = base;
      bumped[p] += 1.0;
      Tensor a = ss2d_forward(nullptr, Var::borrow(base), only).value();
      Tensor b = ss2d_forward(nullptr, Var::borrow(bumped), only).value();
      for (std::size_t q = 0; q < n; ++q) {
        bool reach = rank[q] >= rank[p];
        EXPECT_EQ(a[q] != b[q], reach) << "dir " << d << " p " << p << " q " << q;
      }
    }
  }
}

TEST(Ss2d, TransposeEquivariance) { EXPECT_LE(tools::ss2d_transpose_gap(3), 1e-12); }

TEST(Ss2d, HalfTurnEquivariance) {
  auto dirs = four_dirs(2, 16);
  const std::size_t c = 2, h = 3, w = 4;
  Tensor x = randn({c, h, w}, 17);
  auto rot = [&](const Tensor& t) {
    Tensor r(t.shape());
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) r.at({k, h - 1 - i, w - 1 - j}) = t.at({k, i, j});
    return r;
  };
  std::vector<SsmParams> swapped{dirs[1], dirs[0], dirs[3], dirs[2]};
  Tensor a = rot(ss2d_forward(nullptr, Var::borrow(x), dirs).value());
  Tensor xr = rot(x);
  Tensor b = ss2d_forward(nullptr, Var::borrow(xr), swapped).value();
  EXPECT_LE(max_diff(a, b), 1e-12);
}

TEST(Ss2d, RequiresFourDirections) {
  auto dirs = four_dirs(2, 18);
  dirs.pop_back();
  Tensor x = randn({2, 2, 2}, 19);
  EXPECT_ANY_THROW(ss2d_forward(nullptr, Var::borrow(x), dirs));
}

TEST(BiSsm, SingleTokenIsTwiceOneScan) {
  auto f = factory();
  auto p = SsmParams::make(f, "s", 3, 2);
  Tensor x = randn({3, 1, 1}, 20);
  Tensor one = ssm_forward(nullptr, Var::borrow(x), p).value();
  Tensor both = bissm_forward(nullptr, Var::borrow(x), p, p).value();
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(both[i], 2.0 * one[i], 1e-15);
}

TEST(BiSsm, ZeroInputMatricesGiveTwoSkips) {
  auto f = factory();
  auto p = SsmParams::make(f, "s", 2, 2);
  p.proj_b.fill(0.0);
  p.d_skip = randn({2}, 21);
  Tensor x = randn({2, 2, 3}, 22);
  Tensor y = bissm_forward(nullptr, Var::borrow(x), p, p).value();
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y[i], 2.0 * p.d_skip[i / 6] * x[i], 1e-14);
}

TEST(WindowAttn, GeometryAndClamping) {
  EXPECT_EQ(WindowAttention::geometry(7, false, 14, 14), (std::pair<std::size_t, std::size_t>{7, 0}));
  EXPECT_EQ(WindowAttention::geometry(7, true, 14, 14), (std::pair<std::size_t, std::size_t>{7, 3}));
  EXPECT_EQ(WindowAttention::geometry(7, true, 7, 7), (std::pair<std::size_t, std::size_t>{7, 0}));
  EXPECT_EQ(WindowAttention::geometry(7, true, 4, 4), (std::pair<std::size_t, std::size_t>{4, 0}));
  auto [ws, shift] = WindowAttention::geometry(7, false, 14, 14);
  EXPECT_EQ((14 / ws) * (14 / ws), 4u);
  (void)shift;
}

TEST(WindowAttn, SingleWindowEqualsDenseAttention) { EXPECT_LE(tools::window_attention_dense_gap(5), 1e-6); }

TEST(WindowAttn, UniformInputGivesValueProjection) {
  auto f = factory(23);
  auto p = WindowAttention::make(f, "a", 4, 2, 2);
  Tensor x({4, 4, 4});
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t i = 0; i < 16; ++i) x[k * 16 + i] = 0.3 * double(k) - 0.2;
  Tensor out = p(nullptr, Var::borrow(x), true).value();
  for (std::size_t o = 0; o < 4; ++o) {
    std::vector<double> v(4);
    for (std::size_t d = 0; d < 4; ++d) {
      v[d] = p.qkv.bias[8 + d];
      for (std::size_t k = 0; k < 4; ++k) v[d] += p.qkv.weight.at({8 + d, k}) * x[k * 16];
    }
    double e = p.proj.bias[o];
    for (std::size_t d = 0; d < 4; ++d) e += p.proj.weight.at({o, d}) * v[d];
    for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(out[o * 16 + i], e, 1e-14);
  }
}

TEST(WindowAttn, PaddedMapsKeepShape) {
  auto f = factory(24);
  auto p = WindowAttention::make(f, "a", 4, 3, 2);
  Tensor x = randn({4, 5, 7}, 25);
  EXPECT_EQ(p(nullptr, Var::borrow(x), true).shape(), x.shape());
  EXPECT_EQ(p(nullptr, Var::borrow(x), false).shape(), x.shape());
}

TEST(WindowAttn, HeadsFromHeadDim) {
  auto f = ParamFactory::counting();
  EXPECT_EQ(WindowAttention::make(f, "a", 320, 7, 32).heads, 10u);
  EXPECT_THROW(WindowAttention::make(f, "a", 30, 7, 32), ConfigError);
}

TEST(VssBlock, ZeroWeightsArePureResidual) {
  for (auto kind : {MixerKind::Ss2d, MixerKind::Ssm, MixerKind::Bissm, MixerKind::WindowAttn}) {
    auto f = factory(26);
    MixerOptions o;
    o.head_dim = 2;
    o.window = 2;
    auto b = VssBlock::make(f, "vss", kind, 4, o);
    zero_all([&](const ParamVisitor& v) {
      b.mixer.visit("m", v);
      b.ffn.visit("f", v);
    });
    Tensor x = randn({4, 4, 4}, 27);
    EXPECT_EQ(b(nullptr, Var::borrow(x)).value(), x) << to_string(kind);
  }
}

TEST(VssBlock, ReportsMixerOutput) {
  auto f = factory(28);
  auto b = VssBlock::make(f, "vss", MixerKind::Ss2d, 2, MixerOptions{});
  Tensor x = randn({2, 3, 3}, 29);
  Var m;
  b(nullptr, Var::borrow(x), &m);
  ASSERT_TRUE(m.defined());
  EXPECT_EQ(m.shape(), x.shape());
}

TEST(Mixer, ParseNames) {
  EXPECT_EQ(parse_mixer("window_attn"), MixerKind::WindowAttn);
  EXPECT_EQ(std::string(to_string(MixerKind::Bissm)), "bissm");
  EXPECT_THROW(parse_mixer("conv"), ConfigError);
}

TEST(Macs, AnalyticMatchesInstrumented) {
  for (auto kind : {MixerKind::Ss2d, MixerKind::Ssm, MixerKind::Bissm, MixerKind::WindowAttn})
    for (bool shifted : {false, true}) {
      auto f = ParamFactory(Rng(30), DType::F32);
      MixerOptions o;
      o.head_dim = 4;
      o.window = 3;
      o.shifted = shifted;
      auto b = VssBlock::make(f, "vss", kind, 8, o);
      Tensor x = randn({8, 7, 5}, 31).to(DType::F32);
      MacScope scope;
      b(nullptr, Var::borrow(x));
      EXPECT_EQ(scope.count(), vss_macs(kind, 8, 7, 5, o)) << to_string(kind) << " shifted=" << shifted;
    }
}

TEST(Gradients, BlockComponents) {
  for (const char* c : {"dpe", "convffn", "window_attn", "selective_scan", "ss2d", "bissm", "vss_block"}) {
    auto r = tools::component_grad_check(c, 1);
    EXPECT_LE(r.max_rel_error, 1e-4) << c << " worst " << r.worst;
    EXPECT_GT(r.elements_checked, 0u);
  }
}

}  // namespace
}  // namespace sparx::blocks
