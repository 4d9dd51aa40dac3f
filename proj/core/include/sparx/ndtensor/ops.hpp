// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Differentiable primitives. Every op is a pure function of its inputs; when
// any input is tracked the op is recorded on that input's tape together with
// its backward rule. Outputs are checked for NaN/Inf and rounded to the
// promoted dtype (F32 if any input is F32).

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "sparx/ndtensor/tape.hpp"
#include "sparx/ndtensor/tensor.hpp"

namespace sparx {

/// Multiply-accumulate counter for the current thread. Linear maps, matmuls,
/// convolutions and scans add to it; elementwise ops do not.
std::uint64_t& mac_counter();

class MacScope {
 public:
  MacScope() : start_(mac_counter()) {}
  std::uint64_t count() const { return mac_counter() - start_; }

 private:
  std::uint64_t start_;
};

// -- elementwise --------------------------------------------------------------

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
/// Hadamard product.
Var operator*(const Var& a, const Var& b);
Var scale(const Var& x, double factor);

// -- dense --------------------------------------------------------------------

/// (M,K)x(K,N) -> (M,N), or batched (B,M,K)x(B,K,N) -> (B,M,N).
Var matmul(const Var& a, const Var& b);
/// Swaps the last two axes.
Var transpose_last2(const Var& x);
/// Channel projection: w is (Cout, Cin), x is (Cin, ...), result (Cout, ...).
/// `bias` (Cout) is optional.
Var linear(const Var& x, const Var& w, const Var& bias = Var{});
/// Concatenates along axis 0.
Var concat_channels(const std::vector<Var>& parts);
/// Splits axis 0 into `segments` equal parts.
std::vector<Var> split_channels(const Var& x, std::size_t segments);
Var reshape(const Var& x, Shape shape);

using GatherIndex = std::shared_ptr<const std::vector<std::int64_t>>;
/// out[i] = x[index[i]], or 0 where index[i] < 0. Covers permutations,
/// padding, cropping and window partitioning.
Var gather(const Var& x, const GatherIndex& index, Shape out_shape);

// -- convolution ---------------------------------------------------------------

/// Depthwise convolution, x (C,H,W), w (C,k,k), optional bias (C).
Var depthwise_conv2d(const Var& x, const Var& w, const Var& bias, std::size_t stride, std::size_t pad);
/// Dense convolution, x (Cin,H,W), w (Cout,Cin,k,k), optional bias (Cout).
Var conv2d(const Var& x, const Var& w, const Var& bias, std::size_t stride, std::size_t pad);
/// Non-overlapping average pool with kernel = stride; stride must divide H and W.
Var avg_pool2d(const Var& x, std::size_t stride);

/// 3x3 depthwise convolution with zero padding 1 (shape preserving).
inline Var dwconv3x3_pad1(const Var& x, const Var& w, const Var& bias = Var{}) {
  return depthwise_conv2d(x, w, bias, 1, 1);
}
/// Depthwise k x k convolution with stride k (k must divide H and W): the
/// exact N -> N/k^2 token reducer.
Var dwconv_stride(const Var& x, const Var& w, std::size_t stride);

// -- nonlinear -----------------------------------------------------------------

/// Max-subtracted softmax over the last axis.
Var softmax_lastdim(const Var& x);
/// Normalizes over axis 0 (channels) independently at every remaining
/// position; `gamma`/`beta` (C) are optional.
Var layernorm_channels(const Var& x, const Var& gamma = Var{}, const Var& beta = Var{}, double eps = 1e-6);
Var silu(const Var& x);
/// Exact (erf-based) GELU.
Var gelu(const Var& x);
Var softplus(const Var& x);
Var exp(const Var& x);

// -- reductions ----------------------------------------------------------------

/// Sum of all elements (rank-0 result).
Var sum(const Var& x);
/// Mean over every axis but the first: (C, ...) -> (C).
Var mean_tokens(const Var& x);
/// Softmax cross-entropy of class logits (K) against `label`.
Var cross_entropy(const Var& logits, std::size_t label);

// -- state-space scan -------------------------------------------------------------

/// Diagonal selective scan over a (C,T) sequence:
///   h_t = exp(delta_t * A) * h_{t-1} + delta_t * B_t * x_t,  h_0 = 0
///   y_t = sum_n C_t[n] * h_t[n] + D * x_t
/// with x, delta (C,T); a (C,S); b, c (S,T); d (C).
Var selective_scan(const Var& x, const Var& delta, const Var& a, const Var& b, const Var& c, const Var& d);

/// Scan multiply-accumulates charged per (channel, state, step).
inline constexpr std::uint64_t kScanMacsPerStep = 9;

}  // namespace sparx
