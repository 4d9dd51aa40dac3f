// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sparx/ndtensor/grad_check.hpp"
#include "sparx/ndtensor/tensor.hpp"

namespace sparx::tools {

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double tolerance = 0.0;
  std::string relation;  // how measured is compared with tolerance, e.g. "<=", "=="
  std::string detail;
};

/// Components with a finite-difference scenario: dpe, convffn, window_attn,
/// selective_scan, ss2d, bissm, dmca, vss_block, model.
std::vector<std::string> grad_check_components();
/// Small f64 shapes; loss = sum(out * R) for a fixed random R (cross-entropy
/// for the model). `fraction` < 1 samples parameter elements.
GradCheckResult component_grad_check(std::string_view component, std::uint64_t seed, double fraction = 1.0);

/// Max |out - dense| for a window attention layer whose single window covers
/// the map, against a naive per-token attention loop.
double window_attention_dense_gap(std::uint64_t seed);

/// Max |row sum - 1| of grouped channel attention maps over random trials.
/// `sabotaged` drops the softmax normalization to self-test the harness.
double attention_row_sum_error(std::size_t trials, std::uint64_t seed, bool sabotaged = false);

/// Max |ss2d(x^T, swapped dirs) - ss2d(x)^T|.
double ss2d_transpose_gap(std::uint64_t seed);

/// Random orthogonal (d, d) matrix by Gram-Schmidt.
Tensor random_orthogonal(std::size_t d, std::uint64_t seed);

struct VerifyOptions {
  std::uint64_t seed = 0;
  /// "" or "softmax".
  std::string sabotage;
};

/// Every check runs even when earlier ones fail; exceptions become failures.
std::vector<CheckResult> run_verify(const VerifyOptions& opts);
std::string verify_report_json(const std::vector<CheckResult>& results);

}  // namespace sparx::tools
