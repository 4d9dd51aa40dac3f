// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparx/backbone/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sparx/common/error.hpp"

namespace sparx::model {

using sparx::to_string;

namespace {

std::string stage_name(std::size_t s) { return "stages." + std::to_string(s + 1); }

// Dense convolutions feed a layernorm, so their scale only sets the effective
// step size; fan-in scaling keeps it O(1).
Tensor conv_weight(ParamFactory& f, const std::string& name, std::size_t cout, std::size_t cin) {
  double std = 1.0 / std::sqrt(static_cast<double>(cin * 9));
  return f.make(name, {cout, cin, 3, 3}, ParamFactory::Init::TruncNormal, std);
}

}  // namespace

std::vector<topo::ConnectionPlan> plan_model(const ModelConfig& cfg) {
  std::vector<topo::ConnectionPlan> plans;
  for (std::size_t s = 0; s < kStages; ++s) {
    topo::StageTopologyConfig sc;
    sc.num_layers = cfg.blocks[s];
    sc.stride_s = cfg.stride_s;
    sc.window_m = cfg.window_m;
    if (s == 0) {
      check<ConfigError>(!cfg.ganglion_overrides[0], "stage 1: ganglion override not allowed (stage 1 is plain)");
      sc.mode = topo::ConnectivityMode::Plain;
    } else {
      sc.mode = cfg.connectivity;
      sc.has_cross_stage_input = sc.mode != topo::ConnectivityMode::Plain;
      if (cfg.ganglion_overrides[s]) {
        sc.ganglion_override = cfg.ganglion_overrides[s];
      } else if (s == kStages - 1) {
        std::vector<std::size_t> g;
        if (cfg.stage4_policy == Stage4Policy::AllGanglion)
          for (std::size_t i = 1; i <= sc.num_layers; ++i) g.push_back(i);
        else
          g.push_back(sc.num_layers);
        sc.ganglion_override = std::move(g);
      }
    }
    try {
      plans.push_back(topo::plan_stage(sc));
    } catch (const ConfigError& e) {
      fail<ConfigError>("stage ", s + 1, ": ", e.what());
    }
  }
  return plans;
}

std::array<std::size_t, kStages> stage_sides(std::size_t input_size) {
  check<ConfigError>(input_size >= 32 && input_size % 32 == 0, "input size ", input_size,
                     " must be a positive multiple of 32");
  return {input_size / 4, input_size / 8, input_size / 16, input_size / 32};
}

std::array<std::size_t, kStages> reducer_strides(std::size_t input_size) {
  auto sides = stage_sides(input_size);
  std::array<std::size_t, kStages> r{};
  std::size_t final_tokens = sides[kStages - 1] * sides[kStages - 1];
  for (std::size_t s = 0; s < kStages; ++s) r[s] = dmca::reducer_stride_for(sides[s] * sides[s], final_tokens);
  return r;
}

void ModelParams::visit(const ParamVisitor& v) {
  visit_if(v, "stem.conv1.weight", stem.conv1_w);
  visit_if(v, "stem.conv1.bias", stem.conv1_b);
  stem.norm1.visit("stem.norm1", v);
  visit_if(v, "stem.conv2.weight", stem.conv2_w);
  visit_if(v, "stem.conv2.bias", stem.conv2_b);
  stem.norm2.visit("stem.norm2", v);
  for (std::size_t s = 0; s < stages.size(); ++s) {
    auto& st = stages[s];
    std::string sn = stage_name(s);
    if (st.down) {
      visit_if(v, sn + ".down.conv.weight", st.down->conv_w);
      visit_if(v, sn + ".down.conv.bias", st.down->conv_b);
      st.down->norm.visit(sn + ".down.norm", v);
    }
    if (st.bridge) st.bridge->proj.visit(sn + ".bridge.proj", v);
    for (std::size_t i = 0; i < st.layers.size(); ++i) {
      auto& l = st.layers[i];
      std::string ln = sn + ".layers." + std::to_string(i + 1);
      if (l.has_dpe) l.dpe.visit(ln + ".dpe", v);
      if (l.dmca) {
        l.dmca->visit(ln + ".dmca", v);
        l.fuse.visit(ln + ".fuse", v);
      }
      l.vss.visit(ln + ".vss", v);
    }
  }
  head.norm.visit("head.norm", v);
  head.fc.visit("head.fc", v);
}

namespace {

ModelParams build_with(const ModelConfig& cfg, ParamFactory& f) {
  validate(cfg);
  ModelParams p;
  p.cfg = cfg;
  auto plans = plan_model(cfg);
  auto strides = reducer_strides(cfg.input_size);

  const std::size_t c1 = cfg.channels[0];
  p.stem.conv1_w = conv_weight(f, "stem.conv1.weight", c1 / 2, 3);
  p.stem.conv1_b = f.zeros("stem.conv1.bias", {c1 / 2});
  p.stem.norm1 = LayerNorm::make(f, "stem.norm1", c1 / 2);
  p.stem.conv2_w = conv_weight(f, "stem.conv2.weight", c1, c1 / 2);
  p.stem.conv2_b = f.zeros("stem.conv2.bias", {c1});
  p.stem.norm2 = LayerNorm::make(f, "stem.norm2", c1);

  for (std::size_t s = 0; s < kStages; ++s) {
    StageParams st;
    const std::size_t c = cfg.channels[s];
    std::string sn = stage_name(s);
    st.channels = c;
    st.plan = plans[s];
    if (s > 0) {
      const std::size_t cp = cfg.channels[s - 1];
      Downsampler d;
      d.conv_w = conv_weight(f, sn + ".down.conv.weight", c, cp);
      d.conv_b = f.zeros(sn + ".down.conv.bias", {c});
      d.norm = LayerNorm::make(f, sn + ".down.norm", c);
      st.down = std::move(d);
      if (st.plan.config.has_cross_stage_input) st.bridge = Bridge{Linear::make(f, sn + ".bridge.proj", cp, c)};
    }
    for (const auto& lp : st.plan.layers) {
      LayerParams l;
      std::string ln = sn + ".layers." + std::to_string(lp.index);
      l.plan = lp;
      l.has_dpe = cfg.use_dpe;
      if (cfg.use_dpe) l.dpe = blocks::Dpe::make(f, ln + ".dpe", c);
      if (lp.is_ganglion()) {
        dmca::DmcaConfig dc;
        dc.channels = c;
        dc.num_inputs = lp.y_count();
        dc.groups = cfg.groups;
        dc.reducer_stride = strides[s];
        dc.mode = cfg.dmca_mode;
        dc.bias = cfg.dmca_bias;
        l.dmca = dmca::DmcaParams::make(f, ln + ".dmca", dc);
        l.fuse = Linear::make_fan_in(f, ln + ".fuse", 2 * c, c);
      }
      bool shifted = lp.index % 2 == 0;
      l.vss = blocks::VssBlock::make(f, ln + ".vss", cfg.mixer_kind, c, cfg.mixer_options(shifted));
      st.layers.push_back(std::move(l));
    }
    p.stages.push_back(std::move(st));
  }
  p.head.norm = LayerNorm::make(f, "head.norm", cfg.channels[kStages - 1]);
  p.head.fc = Linear::make(f, "head.fc", cfg.channels[kStages - 1], cfg.num_classes);
  return p;
}

}  // namespace

ModelParams build(const ModelConfig& cfg, std::uint64_t seed) {
  ParamFactory f(Rng(seed), cfg.dtype);
  return build_with(cfg, f);
}

std::size_t count_params(const ModelConfig& cfg) {
  ParamFactory f = ParamFactory::counting();
  build_with(cfg, f);
  return f.counted();
}

std::size_t count_params(ModelParams& p) {
  std::size_t n = 0;
  p.visit([&n](const std::string&, Tensor& t) { n += t.numel(); });
  return n;
}

// -- feature cache -------------------------------------------------------------------

void FeatureCache::put(std::size_t index, Var v) {
  bool fresh = store_.emplace(index, std::move(v)).second;
  if (!fresh) throw std::logic_error("feature cache: index " + std::to_string(index) + " stored twice");
}

const Var& FeatureCache::get(std::size_t index) const {
  auto it = store_.find(index);
  if (it == store_.end()) throw std::logic_error("feature cache: index " + std::to_string(index) + " not live");
  return it->second;
}

void FeatureCache::evict(std::size_t index) {
  if (!store_.erase(index)) throw std::logic_error("feature cache: evicting absent index " + std::to_string(index));
}

std::vector<std::size_t> FeatureCache::keys() const {
  std::vector<std::size_t> k;
  for (const auto& [i, v] : store_) k.push_back(i);
  return k;
}

// -- forward ---------------------------------------------------------------------------

ForwardResult forward(const ModelParams& p, Tape* tape, const Var& image, const ForwardOptions& opts) {
  const auto& cfg = p.cfg;
  check(image.shape().size() == 3 && image.dim(0) == 3, "forward: image must be (3,H,W), got ",
        to_string(image.shape()));
  const std::size_t h = image.dim(1), w = image.dim(2);
  check<ConfigError>(h % 32 == 0 && w % 32 == 0 && h > 0 && w > 0, "forward: input ", h, "x", w,
                     " not divisible by 32");
  check<ConfigError>(opts.last_stage >= 1 && opts.last_stage <= kStages, "forward: last_stage must be 1..", kStages);
  // Reducer strides are fixed at build time; the input must keep them exact.
  auto built = reducer_strides(cfg.input_size);
  for (std::size_t s = 1; s < kStages; ++s)
    check<ConfigError>((h >> (s + 2)) % built[s] == 0 && (w >> (s + 2)) % built[s] == 0, "forward: input ", h, "x",
                       w, " incompatible with reducer stride ", built[s], " of stage ", s + 1);

  ForwardResult r;
  Var x = conv2d(image, param(tape, p.stem.conv1_w), param(tape, p.stem.conv1_b), 2, 1);
  x = gelu(p.stem.norm1(tape, x));
  x = conv2d(x, param(tape, p.stem.conv2_w), param(tape, p.stem.conv2_b), 2, 1);
  x = p.stem.norm2(tape, x);

  for (std::size_t s = 0; s < opts.last_stage; ++s) {
    const StageParams& st = p.stages[s];
    Var prev = x;
    if (st.down) x = st.down->norm(tape, conv2d(prev, param(tape, st.down->conv_w), param(tape, st.down->conv_b), 2, 1));
    auto sched = topo::cache_schedule(st.plan, 0);
    FeatureCache cache;
    if (st.bridge) cache.put(topo::kCrossStageFeature, st.bridge->proj(tape, avg_pool2d(prev, 2)));
    std::vector<std::size_t> last_use(st.layers.size() + 1, 0);
    for (const auto& step : sched.steps)
      for (std::size_t e : step.evictions) last_use[e] = step.layer;
    std::vector<std::vector<std::size_t>> trace;

    for (std::size_t i = 1; i <= st.layers.size(); ++i) {
      const LayerParams& l = st.layers[i - 1];
      auto keys = cache.keys();
      if (keys != sched.steps[i - 1].live_set)
        throw std::logic_error("feature cache diverged from schedule at stage " + std::to_string(s + 1) + " layer " +
                               std::to_string(i));
      trace.push_back(std::move(keys));

      Var hcur = l.has_dpe ? l.dpe(tape, x) : x;
      if (l.dmca) {
        std::vector<Var> ys;
        if (l.plan.takes_cross_stage) ys.push_back(cache.get(topo::kCrossStageFeature));
        for (std::size_t src : l.plan.sources()) ys.push_back(cache.get(src));
        hcur = l.fuse(tape, dmca::dmca_forward(tape, hcur, ys, *l.dmca));
      }
      Var mix;
      x = l.vss(tape, hcur, opts.capture ? &mix : nullptr);
      if (last_use[i] > i) cache.put(i, x);
      for (std::size_t e : sched.steps[i - 1].evictions) cache.evict(e);
      if (opts.capture) r.layers.push_back(LayerCapture{s + 1, i, l.plan.role, x, mix});
    }
    if (cache.size() != 0) throw std::logic_error("feature cache not drained at end of stage " + std::to_string(s + 1));
    r.cache_trace.push_back(std::move(trace));
    r.stage_outputs[s] = x;
  }
  if (opts.last_stage == kStages) r.logits = p.head.fc(tape, p.head.norm(tape, mean_tokens(x)));
  return r;
}

// -- accounting ---------------------------------------------------------------------------

FlopBreakdown count_flops(const ModelConfig& cfg, std::size_t input_size) {
  validate(cfg);
  auto plans = plan_model(cfg);
  auto sides = stage_sides(input_size);
  auto strides = reducer_strides(input_size);
  FlopBreakdown f;
  const std::uint64_t c1 = cfg.channels[0], h2 = input_size / 2, h4 = input_size / 4;
  f.stem = 3 * (c1 / 2) * 9 * h2 * h2 + (c1 / 2) * c1 * 9 * h4 * h4;
  for (std::size_t s = 0; s < kStages; ++s) {
    const std::uint64_t c = cfg.channels[s], side = sides[s], n = side * side;
    if (s > 0) {
      const std::uint64_t cp = cfg.channels[s - 1];
      f.downsample += cp * c * 9 * n;
      if (plans[s].config.has_cross_stage_input) f.bridge += cp * c * n;
    }
    for (const auto& lp : plans[s].layers) {
      if (cfg.use_dpe) f.dpe += blocks::dpe_macs(c, n);
      if (lp.is_ganglion()) {
        dmca::DmcaConfig dc;
        dc.channels = c;
        dc.num_inputs = lp.y_count();
        dc.groups = cfg.groups;
        dc.reducer_stride = strides[s];
        dc.mode = cfg.dmca_mode;
        dc.bias = cfg.dmca_bias;
        f.dmca += dmca::dmca_macs(dc, side, side);
        f.fuse += 2 * c * c * n;
      }
      auto mo = cfg.mixer_options(lp.index % 2 == 0);
      f.mixer += blocks::mixer_macs(cfg.mixer_kind, c, side, side, mo);
      f.ffn += blocks::convffn_macs(c, n);
    }
  }
  f.head = static_cast<std::uint64_t>(cfg.channels[kStages - 1]) * cfg.num_classes;
  return f;
}

MemoryReport memory_report(const ModelConfig& cfg, std::size_t input_size, topo::ConnectivityMode mode) {
  ModelConfig c = cfg;
  c.connectivity = mode;
  auto plans = plan_model(c);
  auto sides = stage_sides(input_size);
  MemoryReport r;
  r.mode = mode;
  for (std::size_t s = 0; s < kStages; ++s) {
    StageMemory m;
    m.stage = s + 1;
    m.feature_bytes = c.channels[s] * sides[s] * sides[s] * 4;
    auto sched = topo::cache_schedule(plans[s], m.feature_bytes);
    m.peak_features = sched.peak_live_count;
    m.peak_bytes = sched.peak_live_bytes;
    m.training_features = sched.training_resident_count;
    m.training_bytes = sched.training_resident_bytes;
    r.inference_peak_bytes = std::max(r.inference_peak_bytes, m.peak_bytes);
    r.training_bytes += m.training_bytes;
    r.stages.push_back(m);
  }
  return r;
}

}  // namespace sparx::model
