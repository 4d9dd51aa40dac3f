// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "sparx/topology/topology.hpp"

namespace sparx::tools {

/// Brute-force reading of the connection rules: every (source, target) pair
/// is classified on its own by scanning the layer list. Returns nullopt where
/// the configuration is invalid.
std::optional<topo::ConnectionPlan> brute_force_plan(const topo::StageTopologyConfig& cfg);

struct OracleSweep {
  std::size_t configs = 0;
  std::size_t mismatches = 0;
  std::vector<std::string> first_failures;  // at most 5
  double seconds = 0.0;
};

/// All depth <= max_depth, S <= max_stride, M <= max_window, modes
/// {sparx, dgc, dsn}, with and without cross-stage input.
OracleSweep sweep_topology_oracle(std::size_t max_depth = 12, std::size_t max_stride = 4, std::size_t max_window = 4);

}  // namespace sparx::tools
