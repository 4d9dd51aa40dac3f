// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sparx/ndtensor/layers.hpp"
#include "sparx/ndtensor/ops.hpp"

namespace sparx::blocks {

enum class MixerKind { Ss2d, Ssm, Bissm, WindowAttn };

const char* to_string(MixerKind kind);
/// Accepts "ss2d", "ssm", "bissm", "window_attn".
MixerKind parse_mixer(std::string_view name);

/// Residual 3x3 depthwise convolution: x + dwconv3x3(x).
struct Dpe {
  Tensor kernel;  // (C,3,3)

  static Dpe make(ParamFactory& f, std::string_view name, std::size_t channels);
  Var operator()(Tape* tape, const Var& x) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
};

/// One selective-scan direction. A = -exp(a_log); the step size is
/// softplus(delta_up(delta_down(x)) + delta_bias).
struct SsmParams {
  Tensor a_log;       // (C, n)
  Tensor d_skip;      // (C)
  Tensor delta_down;  // (R, C)
  Tensor delta_up;    // (C, R)
  Tensor delta_bias;  // (C)
  Tensor proj_b;      // (n, C)
  Tensor proj_c;      // (n, C)

  /// `delta_rank` 0 selects ceil(C/8).
  static SsmParams make(ParamFactory& f, std::string_view name, std::size_t channels, std::size_t state_dim,
                        std::size_t delta_rank = 0);
  std::size_t channels() const { return d_skip.dim(0); }
  std::size_t state_dim() const { return a_log.dim(1); }
  void visit(const std::string& prefix, const ParamVisitor& v);
};

std::size_t default_delta_rank(std::size_t channels);

/// Causal scan over a (C,T) sequence.
Var selective_scan_1d(Tape* tape, const Var& seq, const SsmParams& p);

enum class ScanOrder { RowForward, RowReverse, ColForward, ColReverse };

/// pos[t] = flat row-major position visited at step t.
std::vector<std::size_t> scan_positions(ScanOrder order, std::size_t h, std::size_t w);
/// Flattens (C,H,W) into a (C,HW) sequence along `order`.
Var to_sequence(const Var& x, ScanOrder order);
/// Inverse of to_sequence.
Var from_sequence(const Var& seq, ScanOrder order, std::size_t h, std::size_t w);

/// Four-direction scan; dirs (4) follow ScanOrder. Sum order (d1+d2)+(d3+d4).
Var ss2d_forward(Tape* tape, const Var& x, std::span<const SsmParams> dirs);
/// Forward plus reversed row-major scan.
Var bissm_forward(Tape* tape, const Var& x, const SsmParams& fwd, const SsmParams& bwd);
/// Single row-major forward scan.
Var ssm_forward(Tape* tape, const Var& x, const SsmParams& p);

struct WindowAttention {
  Linear qkv;          // C -> 3C
  Linear proj;         // C -> C
  Tensor rel_bias;     // ((2w-1)^2, heads)
  std::size_t window = 7;
  std::size_t heads = 1;

  static WindowAttention make(ParamFactory& f, std::string_view name, std::size_t channels, std::size_t window,
                              std::size_t head_dim);
  /// Effective window and shift after clamping to the feature size.
  static std::pair<std::size_t, std::size_t> geometry(std::size_t window, bool shifted, std::size_t h, std::size_t w);
  Var operator()(Tape* tape, const Var& x, bool shifted) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
};

/// Mask value for token pairs from different regions after the cyclic shift.
inline constexpr double kShiftMask = -100.0;

struct ConvFfn {
  Linear fc1;         // C -> rC
  Tensor dw_kernel;   // (rC,3,3)
  Tensor dw_bias;     // (rC)
  Linear fc2;         // rC -> C

  static ConvFfn make(ParamFactory& f, std::string_view name, std::size_t channels, std::size_t ratio = 4);
  Var operator()(Tape* tape, const Var& x) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
};

struct MixerOptions {
  std::size_t state_dim = 4;
  std::size_t delta_rank = 0;
  std::size_t window = 7;
  std::size_t head_dim = 32;
  bool shifted = false;
};

struct Mixer {
  MixerKind kind = MixerKind::Ss2d;
  std::vector<SsmParams> dirs;  // 4 (ss2d), 2 (bissm), 1 (ssm)
  WindowAttention attn;
  bool shifted = false;

  static Mixer make(ParamFactory& f, std::string_view name, MixerKind kind, std::size_t channels,
                    const MixerOptions& opts);
  Var operator()(Tape* tape, const Var& x) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
};

/// x1 = x + mixer(LN(x)); out = x1 + ConvFFN(LN(x1)).
struct VssBlock {
  LayerNorm norm1;
  Mixer mixer;
  LayerNorm norm2;
  ConvFfn ffn;

  static VssBlock make(ParamFactory& f, std::string_view name, MixerKind kind, std::size_t channels,
                       const MixerOptions& opts);
  /// `mixer_out`, when given, receives the token-mixer output.
  Var operator()(Tape* tape, const Var& x, Var* mixer_out = nullptr) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
};

/// Analytic multiply-accumulate counts at a (C,H,W) feature size.
std::uint64_t ssm_macs(std::size_t channels, std::size_t tokens, std::size_t state_dim, std::size_t delta_rank);
std::uint64_t mixer_macs(MixerKind kind, std::size_t channels, std::size_t h, std::size_t w, const MixerOptions& opts);
std::uint64_t convffn_macs(std::size_t channels, std::size_t tokens, std::size_t ratio = 4);
std::uint64_t vss_macs(MixerKind kind, std::size_t channels, std::size_t h, std::size_t w, const MixerOptions& opts);
inline std::uint64_t dpe_macs(std::size_t channels, std::size_t tokens) { return 9ull * channels * tokens; }

}  // namespace sparx::blocks
