// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparx_tools/oracle.hpp"

#include <chrono>
#include <sstream>

#include "sparx/common/error.hpp"

namespace sparx::tools {

using topo::ConnectivityMode;

namespace {

bool hub(const topo::StageTopologyConfig& cfg, std::size_t i) {
  if (cfg.mode == ConnectivityMode::Plain) return false;
  if (i == 1 && !cfg.has_cross_stage_input) return false;
  if (cfg.mode == ConnectivityMode::Dsn) return true;
  return i % cfg.stride_s == 0 || i == cfg.num_layers;
}

}  // namespace

std::optional<topo::ConnectionPlan> brute_force_plan(const topo::StageTopologyConfig& cfg) {
  const std::size_t n = cfg.num_layers;
  if (n < 1 || cfg.stride_s < 1 || cfg.window_m < 1) return std::nullopt;
  if (cfg.mode == ConnectivityMode::Plain && cfg.has_cross_stage_input) return std::nullopt;
  bool any = false;
  for (std::size_t i = 1; i <= n; ++i) any = any || hub(cfg, i);
  if (cfg.has_cross_stage_input && !any) return std::nullopt;

  topo::ConnectionPlan plan;
  plan.config = cfg;
  for (std::size_t i = 1; i <= n; ++i) {
    topo::LayerPlan lp;
    lp.index = i;
    if (hub(cfg, i)) {
      lp.role = topo::LayerRole::Ganglion;
      bool earlier_hub = false;
      for (std::size_t j = 1; j < i; ++j) {
        // Hubs in [j, i): how far back j sits in ganglion terms.
        std::size_t hubs_between = 0;
        for (std::size_t k = j; k < i; ++k) hubs_between += hub(cfg, k);
        bool j_hub = hub(cfg, j);
        earlier_hub = earlier_hub || j_hub;
        if (cfg.mode == ConnectivityMode::Sparx) {
          if (j_hub && hubs_between <= cfg.window_m) lp.inter_sources.push_back(j);
          if (!j_hub && hubs_between == 0) lp.intra_sources.push_back(j);
        } else {
          (j_hub ? lp.inter_sources : lp.intra_sources).push_back(j);
        }
      }
      lp.takes_cross_stage = cfg.has_cross_stage_input && !earlier_hub;
    }
    plan.layers.push_back(lp);
  }
  return plan;
}

OracleSweep sweep_topology_oracle(std::size_t max_depth, std::size_t max_stride, std::size_t max_window) {
  auto t0 = std::chrono::steady_clock::now();
  OracleSweep r;
  for (auto mode : {ConnectivityMode::Sparx, ConnectivityMode::Dgc, ConnectivityMode::Dsn})
    for (std::size_t n = 1; n <= max_depth; ++n)
      for (std::size_t s = 1; s <= max_stride; ++s)
        for (std::size_t m = 1; m <= max_window; ++m)
          for (bool cross : {false, true}) {
            topo::StageTopologyConfig cfg{n, s, m, mode, std::nullopt, cross};
            ++r.configs;
            auto expect = brute_force_plan(cfg);
            std::optional<topo::ConnectionPlan> got;
            try {
              got = topo::plan_stage(cfg);
            } catch (const ConfigError&) {
            }
            bool same = expect.has_value() == got.has_value() && (!expect || *expect == *got);
            if (!same) {
              ++r.mismatches;
              if (r.first_failures.size() < 5) {
                std::ostringstream os;
                os << topo::to_string(mode) << " depth=" << n << " S=" << s << " M=" << m << " cross=" << cross;
                r.first_failures.push_back(os.str());
              }
            }
          }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace sparx::tools
