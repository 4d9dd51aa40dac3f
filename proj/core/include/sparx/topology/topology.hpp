// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sparx::topo {

enum class LayerRole { Normal, Ganglion };

/// Sparx: stride-placed ganglion layers, local intra connections and a sliding
///   window of M inter connections.
/// Dgc: same ganglion placement, but every ganglion layer consumes all
///   preceding layers of the stage.
/// Dsn: DenseNet-style, S = 1 and every layer consumes all preceding layers.
/// Plain: no cross-layer connections.
enum class ConnectivityMode { Sparx, Dgc, Dsn, Plain };

const char* to_string(LayerRole role);
const char* to_string(ConnectivityMode mode);
/// Accepts "sparx", "dgc", "dsn", "plain" (case-insensitive).
ConnectivityMode parse_mode(std::string_view name);

/// Index reserved for the bridged feature of the preceding stage in source
/// lists and cache live sets.
inline constexpr std::size_t kCrossStageFeature = 0;

struct StageTopologyConfig {
  std::size_t num_layers = 1;
  std::size_t stride_s = 1;
  std::size_t window_m = 1;
  ConnectivityMode mode = ConnectivityMode::Sparx;
  /// Explicit 1-based ganglion indices; replaces stride placement.
  std::optional<std::vector<std::size_t>> ganglion_override;
  bool has_cross_stage_input = false;
};

struct LayerPlan {
  std::size_t index = 0;  // 1-based within the stage
  LayerRole role = LayerRole::Normal;
  std::vector<std::size_t> intra_sources;  // normal layers, ascending
  std::vector<std::size_t> inter_sources;  // ganglion layers, ascending
  bool takes_cross_stage = false;

  bool is_ganglion() const { return role == LayerRole::Ganglion; }
  /// L: number of features aggregated by this layer's DMCA.
  std::size_t y_count() const { return intra_sources.size() + inter_sources.size() + (takes_cross_stage ? 1 : 0); }
  /// In-stage sources in ascending order (intra and inter merged).
  std::vector<std::size_t> sources() const;
};

struct ConnectionPlan {
  StageTopologyConfig config;
  std::vector<LayerPlan> layers;

  std::size_t size() const { return layers.size(); }
  const LayerPlan& layer(std::size_t index) const { return layers.at(index - 1); }
  std::vector<std::size_t> ganglion_indices() const;
  std::vector<std::size_t> normal_indices() const;
  friend bool operator==(const ConnectionPlan& a, const ConnectionPlan& b);
};

bool operator==(const LayerPlan& a, const LayerPlan& b);

/// Builds the connection plan for one stage. Throws ConfigError on an
/// out-of-range override, a Plain stage that is asked to receive a
/// cross-stage input, or an explicit ganglion layer without any source.
ConnectionPlan plan_stage(const StageTopologyConfig& cfg);

/// Stride placement {S, 2S, ...} clipped to depth, plus the final layer.
std::vector<std::size_t> stride_ganglia(std::size_t num_layers, std::size_t stride);

struct CacheStep {
  std::size_t layer = 0;
  /// Stored outputs (index 0 = cross-stage feature) that must be retained
  /// entering this step because this or a later step consumes them.
  std::vector<std::size_t> live_set;
  /// Outputs whose last consumer is this step.
  std::vector<std::size_t> evictions;
};

struct CacheSchedule {
  std::vector<CacheStep> steps;
  std::size_t bytes_per_feature = 0;
  /// max over steps of |live_set| plus the running activation buffer.
  std::size_t peak_live_count = 0;
  std::size_t peak_live_bytes = 0;
  /// Features a reverse-mode training pass keeps resident at the end of the
  /// forward: every layer output, the concatenated DMCA input of every
  /// ganglion layer (L features each), and the cross-stage feature.
  std::size_t training_resident_count = 0;
  std::size_t training_resident_bytes = 0;
};

CacheSchedule cache_schedule(const ConnectionPlan& plan, std::size_t bytes_per_feature);

/// Graphviz rendering: chain edges are solid, cross-layer edges dashed and
/// tagged with kind=intra|inter|cross. Output is deterministic.
std::string to_dot(const ConnectionPlan& plan, std::string_view graph_name = "stage");

/// JSON dump with stable key order.
std::string to_json(const ConnectionPlan& plan, int indent = 2);

}  // namespace sparx::topo
