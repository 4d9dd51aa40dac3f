// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sparx/ndtensor/layers.hpp"
#include "sparx/ndtensor/ops.hpp"

namespace sparx::dmca {

enum class DmcaMode { Full, Concat, NoCgca, NoSr, NoSkip };

const char* to_string(DmcaMode mode);
/// Accepts "full", "concat", "no_cgca", "no_sr", "no_skip".
DmcaMode parse_mode(std::string_view name);

struct DmcaConfig {
  std::size_t channels = 0;  // C
  std::size_t num_inputs = 1;  // L
  std::size_t groups = 4;  // G
  std::size_t reducer_stride = 1;  // s, r = s^2
  DmcaMode mode = DmcaMode::Full;
  bool bias = true;

  /// Stride actually applied (NoSr forces 1).
  std::size_t effective_stride() const { return mode == DmcaMode::NoSr ? 1 : reducer_stride; }
  bool uses_attention() const { return mode == DmcaMode::Full || mode == DmcaMode::NoSr || mode == DmcaMode::NoSkip; }
};

/// Output width is 2C in every mode.
struct DmcaParams {
  DmcaConfig cfg;
  Linear w1;  // LC -> 2C (LC -> C for NoCgca; (L+1)C -> 2C for Concat)
  Linear w2, w3, w4;  // C -> C
  Tensor r1, r2;  // (C,s,s) depthwise reducers, empty when s = 1
  Linear w5;  // 3C -> 2C (2C for NoCgca, C for NoSkip)

  static DmcaParams make(ParamFactory& f, std::string_view name, const DmcaConfig& cfg);
  void visit(const std::string& prefix, const ParamVisitor& v);
};

/// Shapes and attention map of the last call, for inspection.
struct DmcaTrace {
  Shape q, k, v, attn, z, out;
  Tensor attn_map;  // (G, C/G, C/G)
};

/// Grouped channel attention. q, k (G, C/G, N/r); v (G, C/G, N).
/// A_g = softmax(Q_g K_g^T / sqrt(N/r)); result (C, N).
Var cgca(const Var& q, const Var& k, const Var& v, Var* attn = nullptr);

/// x (C,H,W), ys L maps of the same shape. Result (2C,H,W).
Var dmca_forward(Tape* tape, const Var& x, const std::vector<Var>& ys, const DmcaParams& p,
                 DmcaTrace* trace = nullptr);
/// Same as dmca_forward but with the query path and the skip path fed from
/// separate tensors, so each dependency can be isolated.
Var dmca_core(Tape* tape, const Var& x_query, const Var& x_skip, const std::vector<Var>& ys, const DmcaParams& p,
              DmcaTrace* trace = nullptr);

std::size_t dmca_param_count(const DmcaConfig& cfg);
std::uint64_t dmca_macs(const DmcaConfig& cfg, std::size_t h, std::size_t w);

/// Reducer stride that makes the reduced token count match `target_tokens`
/// (the final-stage count): round(sqrt(N / target)), at least 1.
std::size_t reducer_stride_for(std::size_t tokens, std::size_t target_tokens);

}  // namespace sparx::dmca
