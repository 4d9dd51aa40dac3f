// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sparx/ndtensor/tensor.hpp"

namespace sparx {

class Tape;

/// A tensor value plus, when recorded, its node on a Tape. Copies are cheap:
/// the value is shared and immutable.
class Var {
 public:
  Var() = default;

  /// Untracked value owning `t`.
  static Var constant(Tensor t);
  /// Untracked, non-owning view of `t`; `t` must outlive every use.
  static Var borrow(const Tensor& t);

  const Tensor& value() const { return *value_; }
  const Shape& shape() const { return value_->shape(); }
  std::size_t dim(std::size_t axis) const { return value_->dim(axis); }
  std::size_t numel() const { return value_->numel(); }
  DType dtype() const { return value_->dtype(); }
  bool defined() const { return value_ != nullptr; }

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool tracked() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  std::shared_ptr<const Tensor> value_;
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Maps the op's output gradient to one gradient per input (same order as the
/// inputs passed to Tape::record). An empty Tensor means "no contribution".
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

class Gradients;

/// Ordered record of primitive ops. Nodes are appended in execution order, so
/// every node's inputs precede it.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers `t` as a differentiable leaf. Leaves are keyed by address, so
  /// binding the same tensor twice returns the same handle.
  Var leaf(const Tensor& t);

  Var record(std::string_view op, Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  Gradients backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(int id) const { return nodes_.at(static_cast<std::size_t>(id)).op; }
  const std::vector<int>& inputs_of(int id) const { return nodes_.at(static_cast<std::size_t>(id)).inputs; }
  /// Number of nodes visited by the most recent backward().
  std::size_t last_backward_visits() const { return last_visits_; }

 private:
  struct Node {
    std::string op;
    std::vector<int> inputs;
    BackwardFn backward;
    Shape shape;
    DType dtype;
    const Tensor* leaf = nullptr;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, int> leaf_ids_;
  std::size_t last_visits_ = 0;
};

/// Gradient of one scalar with respect to every leaf on its tape.
class Gradients {
 public:
  /// Gradient for the leaf bound to `param`; zeros if it was not reached.
  const Tensor& wrt(const Tensor& param) const;
  const Tensor& wrt(const Var& leaf) const;
  bool has(const Tensor& param) const { return by_address_.count(&param) != 0; }

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<Tensor> by_id_;
  std::unordered_map<const Tensor*, int> by_address_;
};

/// Binds a parameter for use in a forward pass: a tape leaf when recording,
/// otherwise a borrowed constant.
inline Var param(Tape* tape, const Tensor& t) { return tape ? tape->leaf(t) : Var::borrow(t); }

}  // namespace sparx
