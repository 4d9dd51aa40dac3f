// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <string_view>

#include "sparx/common/rng.hpp"
#include "sparx/ndtensor/tape.hpp"
#include "sparx/ndtensor/tensor.hpp"

namespace sparx {

/// Visitor over named parameter tensors; used for counting, hashing,
/// gradient checks and SGD updates.
using ParamVisitor = std::function<void(const std::string& name, Tensor& t)>;

/// Creates parameter tensors. The counting variant allocates nothing and only
/// tallies elements, so full-size models can be sized without materializing.
class ParamFactory {
 public:
  enum class Init { TruncNormal, Zeros, Ones, Constant };

  ParamFactory(Rng rng, DType dtype) : rng_(rng), dtype_(dtype) {}
  static ParamFactory counting() { return ParamFactory(Rng(0), DType::F32, true); }

  Tensor make(std::string_view name, Shape shape, Init init, double value = 0.0);
  /// Truncated normal with std 0.02 (the linear-layer default).
  Tensor weight(std::string_view name, Shape shape) { return make(name, std::move(shape), Init::TruncNormal, 0.02); }
  Tensor zeros(std::string_view name, Shape shape) { return make(name, std::move(shape), Init::Zeros); }
  Tensor ones(std::string_view name, Shape shape) { return make(name, std::move(shape), Init::Ones); }
  /// Fresh tensor filled by `fill(rng, index)`.
  Tensor custom(std::string_view name, Shape shape, const std::function<double(Rng&, std::size_t)>& fill);

  bool counting_only() const { return counting_; }
  /// Elements created through this factory and every scoped() child.
  std::size_t counted() const { return *count_; }
  DType dtype() const { return dtype_; }
  ParamFactory scoped(std::string_view prefix) const;
  const std::string& prefix() const { return prefix_; }

 private:
  ParamFactory(Rng rng, DType dtype, bool counting) : rng_(rng), dtype_(dtype), counting_(counting) {}
  Rng stream(std::string_view name) const { return rng_.split(prefix_ + std::string(name)); }

  Rng rng_;
  DType dtype_;
  bool counting_ = false;
  std::string prefix_;
  std::shared_ptr<std::size_t> count_ = std::make_shared<std::size_t>(0);
};

struct Linear {
  Tensor weight;  // (out, in)
  Tensor bias;    // (out) or empty

  static Linear make(ParamFactory& f, std::string_view name, std::size_t in, std::size_t out, bool bias = true);
  /// Weights with std 1/sqrt(in), for projections that carry the residual
  /// stream and must not shrink it.
  static Linear make_fan_in(ParamFactory& f, std::string_view name, std::size_t in, std::size_t out, bool bias = true);
  Var operator()(Tape* tape, const Var& x) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  static LayerNorm make(ParamFactory& f, std::string_view name, std::size_t channels);
  Var operator()(Tape* tape, const Var& x) const;
  void visit(const std::string& prefix, const ParamVisitor& v);
};

/// Visits `t` only when it holds storage.
inline void visit_if(const ParamVisitor& v, const std::string& name, Tensor& t) {
  if (!t.empty()) v(name, t);
}

}  // namespace sparx
