// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sparx/backbone/model.hpp"
#include "sparx/ndtensor/tape.hpp"
#include "sparx/topology/topology.hpp"

namespace sparx::analysis {

/// Rows are examples, columns flattened feature dims.
struct FeatureMatrix {
  Tensor data;  // (n, d)
  bool centered = false;

  std::size_t rows() const { return data.dim(0); }
  std::size_t cols() const { return data.dim(1); }
};

/// Subtracts every column mean. Requires n >= 2.
FeatureMatrix center(const Tensor& rows_by_features);
/// Stacks per-example tensors (any equal shape) as rows, then centers.
FeatureMatrix feature_matrix(const std::vector<Tensor>& examples);

/// Linear CKA of centered matrices, computed through n x n Gram matrices:
/// <AA^T, BB^T> / (|AA^T| |BB^T|) = |A^T B|^2 / (|A^T A| |B^T B|).
double cka_linear(const FeatureMatrix& a, const FeatureMatrix& b);

/// m[i][j] = cka_linear(layers[i], layers[j]); symmetric by construction.
Tensor cka_matrix(const std::vector<FeatureMatrix>& layers);
/// CSV with a header row and header column of labels, six decimals.
std::string matrix_csv(const Tensor& m, const std::vector<std::string>& labels);

struct ErfMap {
  Tensor map;  // (H, W), max-normalized to 1
  std::size_t argmax_y = 0, argmax_x = 0;

  /// Number of cells strictly above `threshold`.
  std::size_t support(double threshold = 1e-6) const;
  /// Bounding box (height, width) of the above-threshold cells.
  std::pair<std::size_t, std::size_t> support_extent(double threshold = 1e-6) const;
};

/// Maps an input (C,H,W) to a feature map (C',h,w) recorded on `tape`.
using FeatureFn = std::function<Var(Tape* tape, const Var& input)>;

/// Mean over images of |d(sum over channels of the center feature)/d(input)|,
/// summed over input channels and max-normalized.
ErfMap erf_of(const FeatureFn& fn, const std::vector<Tensor>& images);
/// ERF of the output of stage `probe_stage` (1..4).
ErfMap erf(const model::ModelParams& p, std::size_t probe_stage, const std::vector<Tensor>& images);

/// Binary 8-bit grayscale PGM of a map with values in [0, 1].
std::string to_pgm(const Tensor& map);

struct CostModel {
  std::size_t peak_features = 0;
  std::size_t peak_bytes = 0;
  std::size_t training_features = 0;
  /// Multiply-accumulates of every ganglion's W1 over its concatenated inputs.
  std::uint64_t concat_macs = 0;
};

CostModel cost_model(const topo::StageTopologyConfig& cfg, std::size_t bytes_per_feature, std::size_t channels = 64,
                     std::size_t tokens = 196);

}  // namespace sparx::analysis
