// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sparx/blocks/blocks.hpp"
#include "sparx/dmca/dmca.hpp"
#include "sparx/ndtensor/layers.hpp"
#include "sparx/topology/topology.hpp"

namespace sparx::model {

inline constexpr std::size_t kStages = 4;

enum class Stage4Policy { AllGanglion, LastOnly };

const char* to_string(Stage4Policy p);
Stage4Policy parse_stage4_policy(std::string_view name);

struct ModelConfig {
  std::string variant_name = "custom";
  std::array<std::size_t, kStages> channels{};
  std::array<std::size_t, kStages> blocks{};
  std::size_t stride_s = 2;
  std::size_t window_m = 3;
  blocks::MixerKind mixer_kind = blocks::MixerKind::Ss2d;
  Stage4Policy stage4_policy = Stage4Policy::AllGanglion;
  std::size_t num_classes = 1000;
  std::size_t input_size = 224;

  topo::ConnectivityMode connectivity = topo::ConnectivityMode::Sparx;
  dmca::DmcaMode dmca_mode = dmca::DmcaMode::Full;
  std::size_t groups = 4;
  bool dmca_bias = true;
  bool use_dpe = true;
  std::size_t state_dim = 4;
  std::size_t delta_rank = 0;  // 0 = ceil(C/8)
  std::size_t attn_window = 7;
  std::size_t head_dim = 32;
  /// Explicit ganglion indices per stage (stage 1 entries are rejected).
  std::array<std::optional<std::vector<std::size_t>>, kStages> ganglion_overrides{};
  DType dtype = DType::F32;

  blocks::MixerOptions mixer_options(bool shifted) const;
};

/// "tiny", "small", "base", "tiny-reduced".
ModelConfig variant(std::string_view name);
std::vector<std::string> variant_names();

/// Throws ConfigError naming the offending field or stage.
void validate(const ModelConfig& cfg);

std::string config_to_json(const ModelConfig& cfg, int indent = 2);
/// Unknown keys are rejected. Absent keys keep the values of `base`, which
/// is the named "variant" when present.
ModelConfig config_from_json(std::string_view text);

/// One plan per stage. Stage 1 is always plain; the first ganglion layer of
/// every later stage takes the bridged previous-stage feature.
std::vector<topo::ConnectionPlan> plan_model(const ModelConfig& cfg);

/// Feature side length at the start of every stage for the given input.
std::array<std::size_t, kStages> stage_sides(std::size_t input_size);
/// Reducer stride per stage so that N/r equals the final-stage token count.
std::array<std::size_t, kStages> reducer_strides(std::size_t input_size);

struct Stem {
  Tensor conv1_w, conv1_b;  // (C1/2, 3, 3, 3)
  LayerNorm norm1;
  Tensor conv2_w, conv2_b;  // (C1, C1/2, 3, 3)
  LayerNorm norm2;
};

struct Downsampler {
  Tensor conv_w, conv_b;  // (Cout, Cin, 3, 3), stride 2
  LayerNorm norm;
};

/// Stride-2 average pool then pointwise projection to the new width.
struct Bridge {
  Linear proj;
};

struct LayerParams {
  topo::LayerPlan plan;
  bool has_dpe = true;
  blocks::Dpe dpe;
  std::optional<dmca::DmcaParams> dmca;
  Linear fuse;  // 2C -> C after DMCA
  blocks::VssBlock vss;
};

struct StageParams {
  std::size_t channels = 0;
  topo::ConnectionPlan plan;
  std::optional<Downsampler> down;
  std::optional<Bridge> bridge;
  std::vector<LayerParams> layers;
};

struct Head {
  LayerNorm norm;
  Linear fc;
};

struct ModelParams {
  ModelConfig cfg;
  Stem stem;
  std::vector<StageParams> stages;
  Head head;

  void visit(const ParamVisitor& v);
};

ModelParams build(const ModelConfig& cfg, std::uint64_t seed);
/// Runs the builder in counting mode: exact and allocation-free.
std::size_t count_params(const ModelConfig& cfg);
std::size_t count_params(ModelParams& p);

/// Stored layer outputs keyed by in-stage index (0 = cross-stage feature).
class FeatureCache {
 public:
  void put(std::size_t index, Var v);
  const Var& get(std::size_t index) const;
  void evict(std::size_t index);
  std::vector<std::size_t> keys() const;
  std::size_t size() const { return store_.size(); }

 private:
  std::map<std::size_t, Var> store_;
};

struct LayerCapture {
  std::size_t stage = 0;  // 1-based
  std::size_t index = 0;  // 1-based within stage
  topo::LayerRole role = topo::LayerRole::Normal;
  Var output;
  Var mixer_output;
};

struct ForwardOptions {
  bool capture = false;
  /// Stop after this stage (1..4) and skip the head.
  std::size_t last_stage = kStages;
};

struct ForwardResult {
  Var logits;  // (num_classes), undefined when stopped early
  std::array<Var, kStages> stage_outputs;
  std::vector<LayerCapture> layers;
  /// Cache keys observed entering every step, per stage.
  std::vector<std::vector<std::vector<std::size_t>>> cache_trace;
};

/// image (3,H,W) with H, W divisible by 32.
ForwardResult forward(const ModelParams& p, Tape* tape, const Var& image, const ForwardOptions& opts = {});

struct FlopBreakdown {
  std::uint64_t stem = 0, downsample = 0, bridge = 0, dpe = 0, dmca = 0, fuse = 0, mixer = 0, ffn = 0, head = 0;
  std::uint64_t total() const { return stem + downsample + bridge + dpe + dmca + fuse + mixer + ffn + head; }
};

/// Multiply-accumulates of one forward pass at input_size x input_size.
FlopBreakdown count_flops(const ModelConfig& cfg, std::size_t input_size);

struct StageMemory {
  std::size_t stage = 0;
  std::size_t feature_bytes = 0;
  std::size_t peak_features = 0;
  std::size_t peak_bytes = 0;
  std::size_t training_features = 0;
  std::size_t training_bytes = 0;
};

struct MemoryReport {
  topo::ConnectivityMode mode = topo::ConnectivityMode::Sparx;
  std::vector<StageMemory> stages;
  /// Largest per-stage inference peak (stages run one after another).
  std::size_t inference_peak_bytes = 0;
  /// Sum of per-stage training-resident features.
  std::size_t training_bytes = 0;
};

/// f32 feature maps are assumed (4 bytes per element).
MemoryReport memory_report(const ModelConfig& cfg, std::size_t input_size, topo::ConnectivityMode mode);

// -- toy training ---------------------------------------------------------------

struct ToySample {
  Tensor image;  // (3, size, size)
  std::size_t label = 0;
};

/// Class 0 is brighter on the left half, class 1 on the right half.
std::vector<ToySample> make_toy_dataset(std::size_t samples, std::size_t size, std::uint64_t seed);

struct TrainConfig {
  std::size_t steps = 500;
  double lr = 0.1;
  std::size_t batch = 8;
  std::size_t samples = 64;
  std::size_t image_size = 32;
  std::uint64_t seed = 0;
  /// Zero the classifier so the first loss is ln(num_classes).
  bool zero_init_head = true;
};

struct TrainResult {
  std::vector<double> losses;  // mean mini-batch loss per step
  double final_accuracy = 0.0;
  std::size_t steps_run = 0;
};

/// Plain SGD on softmax cross-entropy, f64. Throws NumericError naming the
/// step on a non-finite loss.
TrainResult train_toy(ModelParams& p, const std::vector<ToySample>& data, const TrainConfig& tc);
double accuracy(const ModelParams& p, const std::vector<ToySample>& data);

}  // namespace sparx::model
