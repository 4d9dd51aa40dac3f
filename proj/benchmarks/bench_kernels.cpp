// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "sparx/backbone/model.hpp"
#include "sparx/blocks/blocks.hpp"
#include "sparx/dmca/dmca.hpp"
#include "sparx/topology/topology.hpp"

namespace {

using namespace sparx;

Tensor randn(Shape s, std::uint64_t seed, DType dt = DType::F32) {
  Rng rng(seed);
  Tensor t(std::move(s), DType::F64);
  for (auto& v : t.data()) v = rng.normal();
  return t.to(dt);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Tensor a = randn({n, n}, 1), b = randn({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(Var::borrow(a), Var::borrow(b)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_SelectiveScan(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  ParamFactory f(Rng(0), DType::F32);
  auto p = blocks::SsmParams::make(f, "ssm", c, 4);
  Tensor x = randn({c, 196}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(blocks::selective_scan_1d(nullptr, Var::borrow(x), p));
}
BENCHMARK(BM_SelectiveScan)->Arg(96)->Arg(320);

void BM_Ss2d(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  ParamFactory f(Rng(0), DType::F32);
  std::vector<blocks::SsmParams> dirs;
  for (int d = 0; d < 4; ++d) dirs.push_back(blocks::SsmParams::make(f, "d" + std::to_string(d), 96, 4));
  Tensor x = randn({96, side, side}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(blocks::ss2d_forward(nullptr, Var::borrow(x), dirs));
}
BENCHMARK(BM_Ss2d)->Arg(14)->Arg(28);

void BM_Dmca(benchmark::State& state) {
  const auto l = static_cast<std::size_t>(state.range(0));
  dmca::DmcaConfig cfg{320, l, 4, 1};
  ParamFactory f(Rng(0), DType::F32);
  auto p = dmca::DmcaParams::make(f, "dmca", cfg);
  Tensor x = randn({320, 14, 14}, 5);
  std::vector<Tensor> ys;
  for (std::size_t i = 0; i < l; ++i) ys.push_back(randn({320, 14, 14}, 6 + i));
  std::vector<Var> yv;
  for (const auto& y : ys) yv.push_back(Var::borrow(y));
  for (auto _ : state) benchmark::DoNotOptimize(dmca::dmca_forward(nullptr, Var::borrow(x), yv, p));
}
BENCHMARK(BM_Dmca)->Arg(1)->Arg(3)->Arg(6);

void BM_ForwardReduced(benchmark::State& state) {
  auto cfg = model::variant("tiny-reduced");
  cfg.mixer_kind = static_cast<blocks::MixerKind>(state.range(0));
  auto p = model::build(cfg, 0);
  Tensor img = randn({3, 64, 64}, 7);
  for (auto _ : state) benchmark::DoNotOptimize(model::forward(p, nullptr, Var::borrow(img)));
  state.SetLabel(blocks::to_string(cfg.mixer_kind));
}
BENCHMARK(BM_ForwardReduced)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

void BM_PlanStage(benchmark::State& state) {
  topo::StageTopologyConfig cfg;
  cfg.num_layers = static_cast<std::size_t>(state.range(0));
  cfg.stride_s = 3;
  cfg.window_m = 3;
  for (auto _ : state) benchmark::DoNotOptimize(topo::cache_schedule(topo::plan_stage(cfg), 4));
}
BENCHMARK(BM_PlanStage)->Arg(7)->Arg(21)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
