// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "sparx/common/error.hpp"
#include "sparx/ndtensor/grad_check.hpp"
#include "sparx/ndtensor/layers.hpp"
#include "sparx/ndtensor/ops.hpp"
#include "sparx/ndtensor/tensor_io.hpp"
#include "test_util.hpp"

namespace sparx {
namespace {

using testing::max_diff;
using testing::randn;

Var c(Shape s, std::vector<double> v) { return Var::constant(Tensor(std::move(s), std::move(v))); }

TEST(Ops, MatmulIdentity) {
  Var out = matmul(c({2, 2}, {1, 0, 0, 1}), c({2, 2}, {3, 4, 5, 6}));
  EXPECT_EQ(out.value(), Tensor({2, 2}, {3, 4, 5, 6}));
}

TEST(Ops, MatmulHandComputed) {
  Var out = matmul(c({2, 2}, {1, 2, 3, 4}), c({2, 2}, {5, 6, 7, 8}));
  EXPECT_EQ(out.value(), Tensor({2, 2}, {19, 22, 43, 50}));
}

TEST(Ops, MatmulShapeMismatchThrows) {
  EXPECT_THROW(matmul(c({2, 3}, std::vector<double>(6, 1.0)), c({2, 2}, {1, 2, 3, 4})), ShapeError);
}

TEST(Ops, ConcatSplitRoundTrip) {
  Tensor a = randn({64, 196}, 1), b = randn({64, 196}, 2);
  Var cat = concat_channels({Var::borrow(a), Var::borrow(b)});
  EXPECT_EQ(cat.shape(), (Shape{128, 196}));
  auto parts = split_channels(cat, 2);
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts[0].value(), a);
  EXPECT_EQ(parts[1].value(), b);
}

TEST(Ops, DeltaKernelIsIdentity) {
  Tensor x = randn({3, 5, 4}, 3);
  Tensor k({3, 3, 3});
  for (std::size_t ch = 0; ch < 3; ++ch) k.at({ch, 1, 1}) = 1.0;
  EXPECT_EQ(dwconv3x3_pad1(Var::borrow(x), Var::borrow(k)).value(), x);
}

TEST(Ops, AvgPoolOfConstant) {
  Var out = avg_pool2d(Var::constant(Tensor::full({1, 4, 4}, 5.0)), 2);
  EXPECT_EQ(out.value(), Tensor::full({1, 2, 2}, 5.0));
}

TEST(Ops, StridedDepthwiseAverage) {
  Var out = dwconv_stride(c({1, 2, 2}, {1, 2, 3, 4}), Var::constant(Tensor::full({1, 2, 2}, 0.25)), 2);
  EXPECT_EQ(out.value(), Tensor({1, 1, 1}, {2.5}));
}

TEST(Ops, StrideMustDivide) {
  EXPECT_THROW(avg_pool2d(Var::constant(Tensor({1, 3, 4})), 2), ShapeError);
}

TEST(Ops, SoftmaxUniform) {
  Var out = softmax_lastdim(c({4}, {0, 0, 0, 0}));
  for (double v : out.value().data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Ops, SoftmaxLargeLogitsStable) {
  Var out = softmax_lastdim(c({3}, {1000, 1000, -1000}));
  EXPECT_NEAR(out.value()[0], 0.5, 1e-12);
  EXPECT_NEAR(out.value()[2], 0.0, 1e-12);
}

TEST(Ops, LayerNormStandardizes) {
  Var out = layernorm_channels(c({3, 1}, {2, 4, 6}));
  EXPECT_NEAR(out.value()[0], -1.2247, 1e-4);
  EXPECT_NEAR(out.value()[1], 0.0, 1e-4);
  EXPECT_NEAR(out.value()[2], 1.2247, 1e-4);
}

TEST(Ops, NonFiniteOutputIsReported) {
  Var x = c({1}, {std::numeric_limits<double>::infinity()});
  EXPECT_THROW(scale(x, 0.0), NumericError);
}

TEST(Ops, F32PromotionRounds) {
  Var a = Var::constant(Tensor({1}, {0.1}, DType::F32));
  Var b = Var::constant(Tensor({1}, {0.2}, DType::F64));
  Var s = a + b;
  EXPECT_EQ(s.dtype(), DType::F32);
  EXPECT_EQ(s.value()[0], static_cast<double>(static_cast<float>(static_cast<double>(0.1f) + 0.2)));
}

TEST(Ops, MacCounterCountsLinear) {
  Tensor w = randn({5, 3}, 4), x = randn({3, 2, 2}, 5);
  MacScope scope;
  linear(Var::borrow(x), Var::borrow(w));
  EXPECT_EQ(scope.count(), 5u * 3u * 4u);
}

TEST(Tape, LinearMapGradient) {
  Tensor w = randn({2, 3}, 6), x = randn({3, 1}, 7);
  Tape tape;
  Var loss = sum(matmul(tape.leaf(w), Var::borrow(x)));
  auto g = tape.backward(loss);
  const Tensor& gw = g.wrt(w);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(gw.at({i, j}), x[j]);
}

TEST(Tape, SoftmaxSumHasZeroGradient) {
  Tensor v = randn({6}, 8);
  Tape tape;
  auto g = tape.backward(sum(softmax_lastdim(tape.leaf(v))));
  for (double e : g.wrt(v).data()) EXPECT_NEAR(e, 0.0, 1e-15);
}

TEST(Tape, UnreachedLeafGetsZeros) {
  Tensor a = randn({3}, 9), b = randn({3}, 10);
  Tape tape;
  Var va = tape.leaf(a);
  tape.leaf(b);
  auto g = tape.backward(sum(va));
  EXPECT_EQ(g.wrt(b), Tensor({3}));
}

TEST(Tape, SharedSubexpressionAccumulates) {
  Tensor a({1}, {3.0});
  Tape tape;
  Var va = tape.leaf(a);
  auto g = tape.backward(sum(va * va + va));
  EXPECT_DOUBLE_EQ(g.wrt(a)[0], 7.0);
}

TEST(GradCheck, Quadratic) {
  Tensor w({1}, {3.0});
  std::vector<Tensor*> params{&w};
  auto r = grad_check([&](Tape* t) { Var v = param(t, w); return sum(v * v); }, params);
  EXPECT_LE(r.max_rel_error, 1e-8);
  EXPECT_EQ(r.elements_checked, 1u);
  EXPECT_EQ(w[0], 3.0);
}

TEST(GradCheck, RequiresF64) {
  Tensor w({1}, {3.0}, DType::F32);
  std::vector<Tensor*> params{&w};
  EXPECT_ANY_THROW(grad_check([&](Tape* t) { return sum(param(t, w)); }, params));
}

TEST(GradCheck, ConvAndNormOps) {
  Tensor x = randn({3, 4, 4}, 11), k = randn({3, 3, 3}, 12), w = randn({2, 3, 3, 3}, 13), g = randn({2}, 14);
  std::vector<Tensor*> params{&x, &k, &w, &g};
  auto fn = [&](Tape* t) {
    Var y = dwconv3x3_pad1(param(t, x), param(t, k));
    y = conv2d(gelu(y), param(t, w), Var{}, 2, 1);
    y = layernorm_channels(y, param(t, g));
    return sum(softplus(y) * silu(y));
  };
  EXPECT_LE(grad_check(fn, params).max_rel_error, 1e-6);
}

TEST(GradCheck, ScanOp) {
  Tensor x = randn({2, 4}, 15), a = randn({2, 3}, 16), b = randn({3, 4}, 17), cc = randn({3, 4}, 18),
         d = randn({2}, 19), dl = randn({2, 4}, 20);
  std::vector<Tensor*> params{&x, &a, &b, &cc, &d, &dl};
  auto fn = [&](Tape* t) {
    Var delta = softplus(param(t, dl));
    Var av = scale(exp(param(t, a)), -1.0);
    return sum(selective_scan(param(t, x), delta, av, param(t, b), param(t, cc), param(t, d)));
  };
  EXPECT_LE(grad_check(fn, params).max_rel_error, 1e-6);
}

TEST(TensorIo, RoundTripBothDtypes) {
  for (DType dt : {DType::F32, DType::F64}) {
    Tensor t = randn({2, 3, 4}, 21).to(dt);
    Tensor back = decode_tensor(encode_tensor(t));
    EXPECT_EQ(back, t);
    EXPECT_EQ(back.dtype(), dt);
  }
}

TEST(TensorIo, RejectsGarbage) {
  EXPECT_THROW(decode_tensor("nope"), FormatError);
  std::string bytes = encode_tensor(randn({4}, 22));
  EXPECT_THROW(decode_tensor(bytes.substr(0, bytes.size() - 3)), FormatError);
}

TEST(Rng, SplitStreamsAreIndependentAndDeterministic) {
  Rng root(42);
  Rng a = root.split("a"), a2 = root.split("a"), b = root.split("b");
  double x = a.normal();
  EXPECT_EQ(x, a2.normal());
  EXPECT_NE(x, b.normal());
  for (int i = 0; i < 1000; ++i) {
    double u = a.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, TruncNormalRespectsBound) {
  Rng r(3);
  for (int i = 0; i < 2000; ++i) ASSERT_LE(std::abs(r.trunc_normal(0.02)), 0.04);
}

TEST(Layers, FactoryCountsWithoutAllocating) {
  ParamFactory f = ParamFactory::counting();
  auto l = Linear::make(f, "l", 7, 5);
  EXPECT_EQ(f.counted(), 7u * 5u + 5u);
  EXPECT_TRUE(l.weight.empty());
}

TEST(Layers, FactoryIsDeterministicPerName) {
  ParamFactory f1(Rng(1), DType::F64), f2(Rng(1), DType::F64);
  auto a = Linear::make(f1, "x", 4, 4);
  Linear::make(f2, "other", 4, 4);
  auto b = Linear::make(f2, "x", 4, 4);
  EXPECT_EQ(a.weight, b.weight);
  EXPECT_LE(max_diff(a.weight, Tensor({4, 4})), 0.04);
}

}  // namespace
}  // namespace sparx
