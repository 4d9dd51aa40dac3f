// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <set>

#include <json.hpp>

#include "sparx/backbone/model.hpp"
#include "sparx/common/error.hpp"

namespace sparx::model {

using sparx::to_string;

using nlohmann::ordered_json;

const char* to_string(Stage4Policy p) { return p == Stage4Policy::AllGanglion ? "all_ganglion" : "last_only"; }

Stage4Policy parse_stage4_policy(std::string_view name) {
  if (name == "all_ganglion") return Stage4Policy::AllGanglion;
  if (name == "last_only") return Stage4Policy::LastOnly;
  fail<ConfigError>("unknown stage4_policy '", name, "' (expected all_ganglion|last_only)");
}

blocks::MixerOptions ModelConfig::mixer_options(bool shifted) const {
  blocks::MixerOptions o;
  o.state_dim = state_dim;
  o.delta_rank = delta_rank;
  o.window = attn_window;
  o.head_dim = head_dim;
  o.shifted = shifted;
  return o;
}

std::vector<std::string> variant_names() { return {"tiny", "small", "base", "tiny-reduced"}; }

ModelConfig variant(std::string_view name) {
  ModelConfig c;
  c.variant_name = std::string(name);
  if (name == "tiny") {
    c.channels = {96, 192, 320, 512};
    c.blocks = {2, 2, 7, 2};
    c.stride_s = 2;
  } else if (name == "small") {
    c.channels = {96, 192, 328, 544};
    c.blocks = {2, 2, 17, 2};
    c.stride_s = 3;
  } else if (name == "base") {
    c.channels = {120, 240, 396, 636};
    c.blocks = {2, 2, 21, 3};
    c.stride_s = 3;
    c.stage4_policy = Stage4Policy::LastOnly;
  } else if (name == "tiny-reduced") {
    c.channels = {8, 16, 24, 32};
    c.blocks = {1, 1, 3, 1};
    c.stride_s = 2;
    c.num_classes = 2;
    c.input_size = 32;
    c.head_dim = 8;
  } else {
    fail<ConfigError>("unknown variant '", name, "' (expected tiny|small|base|tiny-reduced)");
  }
  c.window_m = 3;
  return c;
}

void validate(const ModelConfig& cfg) {
  for (std::size_t s = 0; s < kStages; ++s) {
    check<ConfigError>(cfg.channels[s] >= 1, "stage ", s + 1, ": channels must be >= 1");
    check<ConfigError>(cfg.blocks[s] >= 1, "stage ", s + 1, ": blocks must be >= 1");
    if (s > 0)
      check<ConfigError>(cfg.channels[s] % cfg.groups == 0, "stage ", s + 1, ": channels ", cfg.channels[s],
                         " not divisible by G=", cfg.groups);
    if (cfg.mixer_kind == blocks::MixerKind::WindowAttn)
      check<ConfigError>(cfg.head_dim >= 1 && cfg.channels[s] % cfg.head_dim == 0, "stage ", s + 1, ": channels ",
                         cfg.channels[s], " not divisible by head_dim ", cfg.head_dim);
  }
  check<ConfigError>(cfg.channels[0] % 2 == 0, "stage 1: channels must be even (stem halves them)");
  check<ConfigError>(!cfg.ganglion_overrides[0], "stage 1: ganglion override not allowed (stage 1 is plain)");
  check<ConfigError>(cfg.stride_s >= 1, "stride_s must be >= 1");
  check<ConfigError>(cfg.window_m >= 1, "window_m must be >= 1");
  check<ConfigError>(cfg.num_classes >= 1, "num_classes must be >= 1");
  check<ConfigError>(cfg.groups >= 1, "groups must be >= 1");
  check<ConfigError>(cfg.state_dim >= 1, "state_dim must be >= 1");
  check<ConfigError>(cfg.attn_window >= 1, "attn_window must be >= 1");
  check<ConfigError>(cfg.input_size >= 32 && cfg.input_size % 32 == 0, "input_size ", cfg.input_size,
                     " must be a positive multiple of 32");
}

std::string config_to_json(const ModelConfig& cfg, int indent) {
  ordered_json j;
  j["variant"] = cfg.variant_name;
  j["channels"] = cfg.channels;
  j["blocks"] = cfg.blocks;
  j["stride_s"] = cfg.stride_s;
  j["window_m"] = cfg.window_m;
  j["mixer_kind"] = blocks::to_string(cfg.mixer_kind);
  j["stage4_policy"] = to_string(cfg.stage4_policy);
  j["num_classes"] = cfg.num_classes;
  j["input_size"] = cfg.input_size;
  j["connectivity"] = topo::to_string(cfg.connectivity);
  j["dmca_mode"] = dmca::to_string(cfg.dmca_mode);
  j["groups"] = cfg.groups;
  j["dmca_bias"] = cfg.dmca_bias;
  j["use_dpe"] = cfg.use_dpe;
  j["state_dim"] = cfg.state_dim;
  j["delta_rank"] = cfg.delta_rank;
  j["attn_window"] = cfg.attn_window;
  j["head_dim"] = cfg.head_dim;
  auto ov = ordered_json::array();
  for (const auto& o : cfg.ganglion_overrides) ov.push_back(o ? ordered_json(*o) : ordered_json(nullptr));
  j["ganglion_overrides"] = std::move(ov);
  j["dtype"] = to_string(cfg.dtype);
  return j.dump(indent) + "\n";
}

namespace {

template <class T>
T get_as(const ordered_json& j, const char* key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail<ConfigError>("config field '", key, "': ", e.what());
  }
}

}  // namespace

ModelConfig config_from_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail<ConfigError>("config is not valid JSON: ", e.what());
  }
  check<ConfigError>(j.is_object(), "config must be a JSON object");

  ModelConfig c;
  if (j.contains("variant")) c = variant(get_as<std::string>(j["variant"], "variant"));
  static const std::set<std::string> known = {
      "variant", "channels", "blocks", "stride_s", "window_m", "mixer_kind", "stage4_policy", "num_classes", "input_size",
      "connectivity", "dmca_mode", "groups", "dmca_bias", "use_dpe", "state_dim", "delta_rank", "attn_window",
      "head_dim", "ganglion_overrides", "dtype", "name"};
  for (const auto& [key, value] : j.items()) {
    check<ConfigError>(known.count(key) != 0, "unknown config field '", key, "'");
    if (key == "name") c.variant_name = get_as<std::string>(value, "name");
    else if (key == "channels") c.channels = get_as<std::array<std::size_t, kStages>>(value, "channels");
    else if (key == "blocks") c.blocks = get_as<std::array<std::size_t, kStages>>(value, "blocks");
    else if (key == "stride_s") c.stride_s = get_as<std::size_t>(value, "stride_s");
    else if (key == "window_m") c.window_m = get_as<std::size_t>(value, "window_m");
    else if (key == "mixer_kind") c.mixer_kind = blocks::parse_mixer(get_as<std::string>(value, "mixer_kind"));
    else if (key == "stage4_policy") c.stage4_policy = parse_stage4_policy(get_as<std::string>(value, "stage4_policy"));
    else if (key == "num_classes") c.num_classes = get_as<std::size_t>(value, "num_classes");
    else if (key == "input_size") c.input_size = get_as<std::size_t>(value, "input_size");
    else if (key == "connectivity") c.connectivity = topo::parse_mode(get_as<std::string>(value, "connectivity"));
    else if (key == "dmca_mode") c.dmca_mode = dmca::parse_mode(get_as<std::string>(value, "dmca_mode"));
    else if (key == "groups") c.groups = get_as<std::size_t>(value, "groups");
    else if (key == "dmca_bias") c.dmca_bias = get_as<bool>(value, "dmca_bias");
    else if (key == "use_dpe") c.use_dpe = get_as<bool>(value, "use_dpe");
    else if (key == "state_dim") c.state_dim = get_as<std::size_t>(value, "state_dim");
    else if (key == "delta_rank") c.delta_rank = get_as<std::size_t>(value, "delta_rank");
    else if (key == "attn_window") c.attn_window = get_as<std::size_t>(value, "attn_window");
    else if (key == "head_dim") c.head_dim = get_as<std::size_t>(value, "head_dim");
    else if (key == "dtype") {
      auto d = get_as<std::string>(value, "dtype");
      check<ConfigError>(d == "f32" || d == "f64", "config field 'dtype' must be f32 or f64, got '", d, "'");
      c.dtype = d == "f32" ? DType::F32 : DType::F64;
    } else if (key == "ganglion_overrides") {
      check<ConfigError>(value.is_array() && value.size() == kStages, "config field 'ganglion_overrides' must be an array of ",
                         kStages, " entries (null or index lists)");
      for (std::size_t s = 0; s < kStages; ++s)
        c.ganglion_overrides[s] = value[s].is_null()
                                      ? std::nullopt
                                      : std::optional(get_as<std::vector<std::size_t>>(value[s], "ganglion_overrides"));
    }
  }
  validate(c);
  return c;
}

}  // namespace sparx::model
