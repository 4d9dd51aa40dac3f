// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparx/ndtensor/tape.hpp"

#include "sparx/common/error.hpp"

namespace sparx {

Var Var::constant(Tensor t) {
  Var v;
  v.value_ = std::make_shared<const Tensor>(std::move(t));
  return v;
}

Var Var::borrow(const Tensor& t) {
  Var v;
  // Aliasing constructor with an empty owner: a non-owning shared_ptr.
  v.value_ = std::shared_ptr<const Tensor>(std::shared_ptr<const Tensor>{}, &t);
  return v;
}

Var Tape::leaf(const Tensor& t) {
  check(!t.empty(), "cannot bind an empty tensor as a leaf");
  auto it = leaf_ids_.find(&t);
  Var v = Var::borrow(t);
  v.tape_ = this;
  if (it != leaf_ids_.end()) {
    v.id_ = it->second;
    return v;
  }
  Node n;
  n.op = "leaf";
  n.shape = t.shape();
  n.dtype = t.dtype();
  n.leaf = &t;
  nodes_.push_back(std::move(n));
  v.id_ = static_cast<int>(nodes_.size() - 1);
  leaf_ids_.emplace(&t, v.id_);
  return v;
}

Var Tape::record(std::string_view op, Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  Node n;
  n.op = std::string(op);
  n.shape = value.shape();
  n.dtype = value.dtype();
  n.backward = std::move(backward);
  n.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (in.tracked()) check(in.tape() == this, "op ", op, " mixes inputs from different tapes");
    n.inputs.push_back(in.tracked() ? in.id() : -1);
  }
  nodes_.push_back(std::move(n));
  Var v = Var::constant(std::move(value));
  v.tape_ = this;
  v.id_ = static_cast<int>(nodes_.size() - 1);
  return v;
}

Gradients Tape::backward(const Var& loss) {
  check(loss.tracked() && loss.tape() == this, "loss handle is not recorded on this tape");
  check(loss.numel() == 1, "backward needs a scalar loss, got shape ", to_string(loss.shape()));

  Gradients g;
  g.tape_ = this;
  g.by_id_.resize(nodes_.size());
  g.by_id_[static_cast<std::size_t>(loss.id())] = Tensor::full(loss.shape(), 1.0, DType::F64);

  last_visits_ = 0;
  for (int id = loss.id(); id >= 0; --id) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    ++last_visits_;
    Tensor& grad = g.by_id_[static_cast<std::size_t>(id)];
    if (grad.empty() || !node.backward) continue;
    std::vector<Tensor> parts = node.backward(grad);
    check(parts.size() == node.inputs.size(), "op ", node.op, " backward returned ", parts.size(),
          " gradients for ", node.inputs.size(), " inputs");
    for (std::size_t k = 0; k < parts.size(); ++k) {
      int in = node.inputs[k];
      if (in < 0 || parts[k].empty()) continue;
      Tensor& acc = g.by_id_[static_cast<std::size_t>(in)];
      if (acc.empty()) {
        acc = std::move(parts[k]);
      } else {
        auto dst = acc.data();
        auto src = parts[k].data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
    }
    // Intermediate gradients are not needed once propagated.
    if (!node.leaf) grad = Tensor();
  }

  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const auto& node = nodes_[id];
    if (!node.leaf) continue;
    if (g.by_id_[id].empty()) g.by_id_[id] = Tensor::zeros(node.shape, DType::F64);
    g.by_address_.emplace(node.leaf, static_cast<int>(id));
  }
  return g;
}

const Tensor& Gradients::wrt(const Tensor& param) const {
  auto it = by_address_.find(&param);
  check(it != by_address_.end(), "tensor is not a leaf on the differentiated tape");
  return by_id_[static_cast<std::size_t>(it->second)];
}

const Tensor& Gradients::wrt(const Var& leaf) const {
  check(leaf.tracked() && leaf.tape() == tape_, "handle is not on the differentiated tape");
  const Tensor& t = by_id_.at(static_cast<std::size_t>(leaf.id()));
  check(!t.empty(), "handle ", leaf.id(), " is not a leaf");
  return t;
}

}  // namespace sparx
