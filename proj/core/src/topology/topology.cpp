// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparx/topology/topology.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sparx/common/error.hpp"

namespace sparx::topo {

const char* to_string(LayerRole role) { return role == LayerRole::Ganglion ? "ganglion" : "normal"; }

const char* to_string(ConnectivityMode mode) {
  switch (mode) {
    case ConnectivityMode::Sparx: return "sparx";
    case ConnectivityMode::Dgc: return "dgc";
    case ConnectivityMode::Dsn: return "dsn";
    case ConnectivityMode::Plain: return "plain";
  }
  return "?";
}

ConnectivityMode parse_mode(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "sparx") return ConnectivityMode::Sparx;
  if (s == "dgc") return ConnectivityMode::Dgc;
  if (s == "dsn") return ConnectivityMode::Dsn;
  if (s == "plain") return ConnectivityMode::Plain;
  fail<ConfigError>("unknown connectivity mode '", name, "' (expected sparx|dgc|dsn|plain)");
}

std::vector<std::size_t> LayerPlan::sources() const {
  std::vector<std::size_t> s = intra_sources;
  s.insert(s.end(), inter_sources.begin(), inter_sources.end());
  std::sort(s.begin(), s.end());
  return s;
}

bool operator==(const LayerPlan& a, const LayerPlan& b) {
  return a.index == b.index && a.role == b.role && a.intra_sources == b.intra_sources &&
         a.inter_sources == b.inter_sources && a.takes_cross_stage == b.takes_cross_stage;
}

bool operator==(const ConnectionPlan& a, const ConnectionPlan& b) { return a.layers == b.layers; }

std::vector<std::size_t> ConnectionPlan::ganglion_indices() const {
  std::vector<std::size_t> g;
  for (const auto& l : layers)
    if (l.is_ganglion()) g.push_back(l.index);
  return g;
}

std::vector<std::size_t> ConnectionPlan::normal_indices() const {
  std::vector<std::size_t> g;
  for (const auto& l : layers)
    if (!l.is_ganglion()) g.push_back(l.index);
  return g;
}

std::vector<std::size_t> stride_ganglia(std::size_t num_layers, std::size_t stride) {
  std::vector<std::size_t> g;
  for (std::size_t i = stride; i <= num_layers; i += stride) g.push_back(i);
  if (g.empty() || g.back() != num_layers) g.push_back(num_layers);
  return g;
}

ConnectionPlan plan_stage(const StageTopologyConfig& cfg) {
  check<ConfigError>(cfg.num_layers >= 1, "stage needs at least one layer");
  check<ConfigError>(cfg.stride_s >= 1, "stride S must be >= 1, got ", cfg.stride_s);
  check<ConfigError>(cfg.window_m >= 1, "window M must be >= 1, got ", cfg.window_m);
  check<ConfigError>(!(cfg.mode == ConnectivityMode::Plain && cfg.has_cross_stage_input),
                     "plain connectivity has no ganglion layer to receive the cross-stage input");

  const std::size_t n = cfg.num_layers;
  std::set<std::size_t> ganglia;
  bool explicit_set = false;
  switch (cfg.mode) {
    case ConnectivityMode::Plain:
      break;
    case ConnectivityMode::Dsn:
      for (std::size_t i = 1; i <= n; ++i) ganglia.insert(i);
      break;
    case ConnectivityMode::Sparx:
    case ConnectivityMode::Dgc:
      if (cfg.ganglion_override) {
        explicit_set = true;
        for (std::size_t i : *cfg.ganglion_override) {
          check<ConfigError>(i >= 1 && i <= n, "ganglion override index ", i, " out of range 1..", n);
          ganglia.insert(i);
        }
      } else {
        auto g = stride_ganglia(n, cfg.stride_s);
        ganglia.insert(g.begin(), g.end());
      }
      break;
  }
  // Layer 1 can only aggregate the cross-stage feature; without one it has
  // nothing to consume.
  if (ganglia.count(1) && !cfg.has_cross_stage_input) {
    check<ConfigError>(!explicit_set, "ganglion layer 1 has no sources (no cross-stage input)");
    ganglia.erase(1);
  }
  check<ConfigError>(!cfg.has_cross_stage_input || !ganglia.empty(),
                     "no ganglion layer to receive the cross-stage input");

  ConnectionPlan plan;
  plan.config = cfg;
  plan.layers.resize(n);
  std::vector<std::size_t> seen_ganglia;
  bool cross_assigned = false;
  for (std::size_t i = 1; i <= n; ++i) {
    LayerPlan& lp = plan.layers[i - 1];
    lp.index = i;
    if (!ganglia.count(i)) continue;
    lp.role = LayerRole::Ganglion;
    if (cfg.mode == ConnectivityMode::Sparx) {
      std::size_t lo = seen_ganglia.empty() ? 1 : seen_ganglia.back() + 1;
      for (std::size_t j = lo; j < i; ++j) lp.intra_sources.push_back(j);
      std::size_t take = std::min(cfg.window_m, seen_ganglia.size());
      lp.inter_sources.assign(seen_ganglia.end() - static_cast<std::ptrdiff_t>(take), seen_ganglia.end());
    } else {
      for (std::size_t j = 1; j < i; ++j) (ganglia.count(j) ? lp.inter_sources : lp.intra_sources).push_back(j);
    }
    if (cfg.has_cross_stage_input && !cross_assigned) {
      lp.takes_cross_stage = true;
      cross_assigned = true;
    }
    seen_ganglia.push_back(i);
  }
  return plan;
}

CacheSchedule cache_schedule(const ConnectionPlan& plan, std::size_t bytes_per_feature) {
  const std::size_t n = plan.size();
  // last_use[j] = last step consuming feature j (0 = never).
  std::vector<std::size_t> last_use(n + 1, 0);
  std::size_t concat_features = 0;
  bool has_cross = false;
  for (const auto& l : plan.layers) {
    for (std::size_t s : l.sources()) last_use[s] = std::max(last_use[s], l.index);
    if (l.takes_cross_stage) {
      last_use[kCrossStageFeature] = std::max(last_use[kCrossStageFeature], l.index);
      has_cross = true;
    }
    if (l.is_ganglion()) concat_features += l.y_count();
  }

  CacheSchedule sched;
  sched.bytes_per_feature = bytes_per_feature;
  std::size_t peak = 0;
  for (std::size_t i = 1; i <= n; ++i) {
    CacheStep step;
    step.layer = i;
    for (std::size_t j = 0; j < i; ++j)
      if (last_use[j] >= i) step.live_set.push_back(j);
    for (std::size_t j = 0; j <= n; ++j)
      if (last_use[j] == i) step.evictions.push_back(j);
    peak = std::max(peak, step.live_set.size());
    sched.steps.push_back(std::move(step));
  }
  sched.peak_live_count = peak + 1;
  sched.peak_live_bytes = sched.peak_live_count * bytes_per_feature;
  sched.training_resident_count = n + concat_features + (has_cross ? 1 : 0);
  sched.training_resident_bytes = sched.training_resident_count * bytes_per_feature;
  return sched;
}

std::string to_dot(const ConnectionPlan& plan, std::string_view graph_name) {
  std::ostringstream os;
  os << "digraph " << graph_name << " {\n";
  os << "  rankdir=LR;\n";
  bool cross = std::any_of(plan.layers.begin(), plan.layers.end(), [](const auto& l) { return l.takes_cross_stage; });
  if (cross) os << "  x0 [label=\"cross-stage\", shape=box, style=dotted];\n";
  for (const auto& l : plan.layers) {
    os << "  L" << l.index << " [label=\"" << l.index << "\"";
    if (l.is_ganglion())
      os << ", shape=doublecircle, style=filled, fillcolor=gold, role=ganglion";
    else
      os << ", shape=circle, role=normal";
    os << "];\n";
  }
  for (std::size_t i = 1; i < plan.size(); ++i) os << "  L" << i << " -> L" << i + 1 << " [kind=chain];\n";
  for (const auto& l : plan.layers) {
    if (l.takes_cross_stage) os << "  x0 -> L" << l.index << " [kind=cross, style=dashed];\n";
    for (std::size_t s : l.intra_sources) os << "  L" << s << " -> L" << l.index << " [kind=intra, style=dashed];\n";
    for (std::size_t s : l.inter_sources)
      os << "  L" << s << " -> L" << l.index << " [kind=inter, style=dashed, color=red];\n";
  }
  os << "}\n";
  return os.str();
}

std::string to_json(const ConnectionPlan& plan, int indent) {
  nlohmann::ordered_json j;
  const auto& c = plan.config;
  j["mode"] = to_string(c.mode);
  j["num_layers"] = c.num_layers;
  j["stride_s"] = c.stride_s;
  j["window_m"] = c.window_m;
  j["has_cross_stage_input"] = c.has_cross_stage_input;
  j["ganglion_indices"] = plan.ganglion_indices();
  auto layers = nlohmann::ordered_json::array();
  for (const auto& l : plan.layers) {
    nlohmann::ordered_json lj;
    lj["index"] = l.index;
    lj["role"] = to_string(l.role);
    lj["intra_sources"] = l.intra_sources;
    lj["inter_sources"] = l.inter_sources;
    lj["takes_cross_stage"] = l.takes_cross_stage;
    lj["y_count"] = l.y_count();
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  return j.dump(indent) + "\n";
}

}  // namespace sparx::topo
