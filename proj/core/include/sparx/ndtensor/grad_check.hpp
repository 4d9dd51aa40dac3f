// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "sparx/ndtensor/tape.hpp"

namespace sparx {

/// Scalar function of the bound parameters. It receives the tape to record on
/// (nullptr for the finite-difference evaluations) and must bind every
/// parameter through `param(tape, t)`.
using ScalarFn = std::function<Var(Tape*)>;

struct GradCheckOptions {
  /// Fraction of elements (per call, across all tensors) to probe; 1 probes all.
  double sample_fraction = 1.0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t elements_checked = 0;
  /// "tensor#index" of the worst element.
  std::string worst;
};

/// Compares reverse-mode gradients with central differences of step `h`,
/// returning the max over probed elements of
///   |analytic - numeric| / max(1, |analytic|, |numeric|).
/// Parameters are perturbed in place and restored. Parameters must be F64.
GradCheckResult grad_check(const ScalarFn& f, std::span<Tensor* const> params, double h = 1e-4,
                           const GradCheckOptions& opts = {});

}  // namespace sparx
