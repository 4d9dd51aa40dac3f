// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <regex>
#include <set>

#include <json.hpp>

#include "sparx/common/error.hpp"
#include "sparx/topology/topology.hpp"
#include "sparx_tools/oracle.hpp"

namespace sparx::topo {
namespace {

using V = std::vector<std::size_t>;

StageTopologyConfig cfg(std::size_t n, std::size_t s, std::size_t m, ConnectivityMode mode = ConnectivityMode::Sparx,
                        bool cross = false) {
  return StageTopologyConfig{n, s, m, mode, std::nullopt, cross};
}

TEST(PlanStage, EightLayersStrideTwo) {
  auto p = plan_stage(cfg(8, 2, 3));
  EXPECT_EQ(p.ganglion_indices(), (V{2, 4, 6, 8}));
  EXPECT_EQ(p.normal_indices(), (V{1, 3, 5, 7}));
}

TEST(PlanStage, WindowTwoSources) {
  auto p = plan_stage(cfg(8, 2, 2));
  EXPECT_EQ(p.layer(8).inter_sources, (V{4, 6}));
  EXPECT_EQ(p.layer(8).intra_sources, (V{7}));
  EXPECT_TRUE(p.layer(2).inter_sources.empty());
  EXPECT_EQ(p.layer(2).intra_sources, (V{1}));
  EXPECT_EQ(p.layer(8).y_count(), 3u);
}

TEST(PlanStage, DsnEveryLaterLayerTakesAllPredecessors) {
  auto p = plan_stage(cfg(4, 1, 1, ConnectivityMode::Dsn));
  EXPECT_FALSE(p.layer(1).is_ganglion());
  for (std::size_t i = 2; i <= 4; ++i) {
    EXPECT_TRUE(p.layer(i).is_ganglion());
    V all;
    for (std::size_t j = 1; j < i; ++j) all.push_back(j);
    EXPECT_EQ(p.layer(i).sources(), all);
  }
}

TEST(PlanStage, PlainHasNoConnections) {
  auto p = plan_stage(cfg(5, 2, 2, ConnectivityMode::Plain));
  for (const auto& l : p.layers) {
    EXPECT_FALSE(l.is_ganglion());
    EXPECT_TRUE(l.sources().empty());
  }
}

TEST(PlanStage, DgcUsesSparxPlacementWithoutWindow) {
  auto p = plan_stage(cfg(8, 2, 1, ConnectivityMode::Dgc));
  EXPECT_EQ(p.ganglion_indices(), (V{2, 4, 6, 8}));
  EXPECT_EQ(p.layer(8).inter_sources, (V{2, 4, 6}));
  EXPECT_EQ(p.layer(8).intra_sources, (V{1, 3, 5, 7}));
}

TEST(PlanStage, FinalLayerIsForced) {
  EXPECT_EQ(plan_stage(cfg(7, 3, 2)).ganglion_indices(), (V{3, 6, 7}));
  EXPECT_EQ(plan_stage(cfg(6, 3, 2)).ganglion_indices(), (V{3, 6}));
}

TEST(PlanStage, CrossStageFeatureGoesToFirstGanglion) {
  auto p = plan_stage(cfg(2, 1, 3, ConnectivityMode::Sparx, true));
  EXPECT_EQ(p.ganglion_indices(), (V{1, 2}));
  EXPECT_TRUE(p.layer(1).takes_cross_stage);
  EXPECT_FALSE(p.layer(2).takes_cross_stage);
  EXPECT_EQ(p.layer(1).y_count(), 1u);
  EXPECT_EQ(p.layer(2).inter_sources, (V{1}));
}

TEST(PlanStage, LayerOneWithoutCrossIsDemoted) {
  auto p = plan_stage(cfg(3, 1, 2));
  EXPECT_EQ(p.ganglion_indices(), (V{2, 3}));
}

TEST(PlanStage, InvalidConfigsAreConfigErrors) {
  EXPECT_THROW(plan_stage(cfg(0, 2, 2)), ConfigError);
  EXPECT_THROW(plan_stage(cfg(4, 0, 2)), ConfigError);
  EXPECT_THROW(plan_stage(cfg(4, 2, 0)), ConfigError);
  EXPECT_THROW(plan_stage(cfg(4, 2, 2, ConnectivityMode::Plain, true)), ConfigError);
  auto bad = cfg(4, 2, 2);
  bad.ganglion_override = V{5};
  EXPECT_THROW(plan_stage(bad), ConfigError);
  bad.ganglion_override = V{1};
  EXPECT_THROW(plan_stage(bad), ConfigError);
}

TEST(PlanStage, OverrideIsHonoured) {
  auto c = cfg(6, 2, 2);
  c.ganglion_override = V{3, 6};
  auto p = plan_stage(c);
  EXPECT_EQ(p.ganglion_indices(), (V{3, 6}));
  EXPECT_EQ(p.layer(6).intra_sources, (V{4, 5}));
  EXPECT_EQ(p.layer(6).inter_sources, (V{3}));
}

TEST(PlanStage, ParseModeIsCaseInsensitive) {
  EXPECT_EQ(parse_mode("DSN"), ConnectivityMode::Dsn);
  EXPECT_THROW(parse_mode("dense"), ConfigError);
}

TEST(Oracle, BruteForceMatchesEverywhere) {
  auto r = tools::sweep_topology_oracle(12, 4, 4);
  EXPECT_EQ(r.configs, 3u * 12 * 4 * 4 * 2);
  EXPECT_EQ(r.mismatches, 0u) << (r.first_failures.empty() ? "" : r.first_failures[0]);
  EXPECT_LT(r.seconds, 1.0);
}

TEST(Oracle, AgreesOnRejections) {
  EXPECT_FALSE(tools::brute_force_plan(cfg(4, 2, 2, ConnectivityMode::Plain, true)).has_value());
  EXPECT_FALSE(tools::brute_force_plan(cfg(0, 2, 2)).has_value());
}

void check_invariants(std::size_t n, std::size_t s, std::size_t m, ConnectivityMode mode, bool cross) {
  SCOPED_TRACE(::testing::Message() << to_string(mode) << " n=" << n << " S=" << s << " M=" << m << " cross=" << cross);
  auto p = plan_stage(cfg(n, s, m, mode, cross));
  auto g = p.ganglion_indices();
  std::set<std::size_t> gs(g.begin(), g.end());
  std::size_t cross_takers = 0;
  for (const auto& l : p.layers) {
    cross_takers += l.takes_cross_stage;
    if (!l.is_ganglion()) {
      EXPECT_TRUE(l.sources().empty());
      continue;
    }
    for (std::size_t src : l.sources()) EXPECT_LT(src, l.index);
    for (std::size_t src : l.inter_sources) EXPECT_TRUE(gs.count(src));
    for (std::size_t src : l.intra_sources) EXPECT_FALSE(gs.count(src));
    if (mode == ConnectivityMode::Sparx) EXPECT_LE(l.inter_sources.size(), m);
    EXPECT_GE(l.y_count(), 1u);
  }
  if (mode != ConnectivityMode::Plain) EXPECT_TRUE(gs.count(n) || (n == 1 && !cross));
  EXPECT_EQ(cross_takers, cross ? 1u : 0u);
}

TEST(PlanStage, StructuralInvariantsOverSweep) {
  for (auto mode : {ConnectivityMode::Sparx, ConnectivityMode::Dgc, ConnectivityMode::Dsn, ConnectivityMode::Plain})
    for (std::size_t n = 1; n <= 12; ++n)
      for (std::size_t s = 1; s <= 4; ++s)
        for (std::size_t m = 1; m <= 4; ++m)
          for (bool cross : {false, true})
            if (!(mode == ConnectivityMode::Plain && cross)) check_invariants(n, s, m, mode, cross);
}

TEST(PlanStage, GangliaNestWhenStrideDivides) {
  for (std::size_t n = 1; n <= 24; ++n)
    for (std::size_t s = 1; s <= 6; ++s)
      for (std::size_t sp = 1; sp <= s; ++sp) {
        if (s % sp) continue;
        auto coarse = plan_stage(cfg(n, s, 2, ConnectivityMode::Sparx, true)).ganglion_indices();
        auto fine = plan_stage(cfg(n, sp, 2, ConnectivityMode::Sparx, true)).ganglion_indices();
        EXPECT_TRUE(std::includes(fine.begin(), fine.end(), coarse.begin(), coarse.end())) << n << " " << s << " " << sp;
      }
}

TEST(PlanStage, GangliaNeedNotNestOtherwise) {
  auto s3 = plan_stage(cfg(8, 3, 2)).ganglion_indices();
  auto s2 = plan_stage(cfg(8, 2, 2)).ganglion_indices();
  EXPECT_EQ(s3, (V{3, 6, 8}));
  EXPECT_FALSE(std::includes(s2.begin(), s2.end(), s3.begin(), s3.end()));
}

TEST(CacheSchedule, PlainKeepsOneFeature) {
  auto sched = cache_schedule(plan_stage(cfg(5, 2, 2, ConnectivityMode::Plain)), 10);
  EXPECT_EQ(sched.peak_live_count, 1u);
  EXPECT_EQ(sched.peak_live_bytes, 10u);
  for (const auto& st : sched.steps) EXPECT_TRUE(st.live_set.empty());
}

TEST(CacheSchedule, DsnEightLayersPeaksAtEight) {
  auto sched = cache_schedule(plan_stage(cfg(8, 1, 1, ConnectivityMode::Dsn)), 1);
  EXPECT_EQ(sched.peak_live_count, 8u);
  EXPECT_EQ(sched.steps.back().live_set, (V{1, 2, 3, 4, 5, 6, 7}));
}

TEST(CacheSchedule, SparxBelowDsn) {
  auto a = cache_schedule(plan_stage(cfg(8, 2, 2)), 1);
  auto b = cache_schedule(plan_stage(cfg(8, 1, 1, ConnectivityMode::Dsn)), 1);
  EXPECT_LT(a.peak_live_count, b.peak_live_count);
}

TEST(CacheSchedule, TinyStageThreeOrdering) {
  auto a = cache_schedule(plan_stage(cfg(7, 2, 3, ConnectivityMode::Sparx, true)), 1);
  auto b = cache_schedule(plan_stage(cfg(7, 2, 3, ConnectivityMode::Dgc, true)), 1);
  auto c = cache_schedule(plan_stage(cfg(7, 2, 3, ConnectivityMode::Dsn, true)), 1);
  EXPECT_EQ(a.training_resident_count, 18u);
  EXPECT_EQ(b.training_resident_count, 24u);
  EXPECT_EQ(c.training_resident_count, 30u);
  EXPECT_EQ(a.peak_live_count, 4u);
  EXPECT_EQ(b.peak_live_count, 7u);
  EXPECT_LE(b.peak_live_count, c.peak_live_count);
}

TEST(CacheSchedule, LiveSetsFollowLastUse) {
  for (auto mode : {ConnectivityMode::Sparx, ConnectivityMode::Dgc, ConnectivityMode::Dsn})
    for (std::size_t n = 1; n <= 12; ++n) {
      auto plan = plan_stage(cfg(n, 2, 2, mode, true));
      auto sched = cache_schedule(plan, 1);
      std::map<std::size_t, std::size_t> last;
      for (const auto& l : plan.layers) {
        for (std::size_t s : l.sources()) last[s] = l.index;
        if (l.takes_cross_stage) last[kCrossStageFeature] = l.index;
      }
      for (const auto& st : sched.steps) {
        V expect;
        for (auto [f, u] : last)
          if (f < st.layer && u >= st.layer) expect.push_back(f);
        EXPECT_EQ(st.live_set, expect);
      }
    }
}

TEST(CacheSchedule, BytesScaleLinearly) {
  auto plan = plan_stage(cfg(7, 2, 3));
  EXPECT_EQ(cache_schedule(plan, 2 * 196).peak_live_bytes, 2 * cache_schedule(plan, 196).peak_live_bytes);
}

TEST(Dot, PlainChainOnly) {
  std::string dot = to_dot(plan_stage(cfg(3, 2, 2, ConnectivityMode::Plain)));
  EXPECT_NE(dot.find("L1 -> L2 [kind=chain]"), std::string::npos);
  EXPECT_NE(dot.find("L2 -> L3 [kind=chain]"), std::string::npos);
  EXPECT_EQ(dot.find("dashed"), std::string::npos);
}

TEST(Dot, EdgesMatchPlan) {
  auto plan = plan_stage(cfg(8, 2, 2));
  std::string dot = to_dot(plan);
  std::regex edge(R"(L(\d+) -> L(\d+) \[kind=(intra|inter))");
  std::set<std::pair<std::size_t, std::size_t>> parsed, expected;
  for (auto it = std::sregex_iterator(dot.begin(), dot.end(), edge); it != std::sregex_iterator(); ++it)
    parsed.insert({std::stoul((*it)[1]), std::stoul((*it)[2])});
  for (const auto& l : plan.layers)
    for (std::size_t s : l.sources()) expected.insert({s, l.index});
  EXPECT_EQ(parsed, expected);
  std::size_t doublecircles = 0;
  for (std::size_t pos = 0; (pos = dot.find("doublecircle", pos)) != std::string::npos; ++pos) ++doublecircles;
  EXPECT_EQ(doublecircles, 4u);
}

TEST(Dot, Deterministic) {
  EXPECT_EQ(to_dot(plan_stage(cfg(8, 2, 2))), to_dot(plan_stage(cfg(8, 2, 2))));
}

TEST(Json, FieldsAndRoundTripOfSources) {
  auto plan = plan_stage(cfg(8, 2, 2, ConnectivityMode::Sparx, true));
  auto j = nlohmann::json::parse(to_json(plan));
  EXPECT_EQ(j["mode"], "sparx");
  EXPECT_EQ(j["ganglion_indices"], (V{2, 4, 6, 8}));
  ASSERT_EQ(j["layers"].size(), 8u);
  EXPECT_EQ(j["layers"][7]["inter_sources"], (V{4, 6}));
  EXPECT_EQ(j["layers"][1]["takes_cross_stage"], true);
}

}  // namespace
}  // namespace sparx::topo
