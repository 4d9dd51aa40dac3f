// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparx/ndtensor/layers.hpp"

#include <cmath>

#include "sparx/ndtensor/ops.hpp"

namespace sparx {

Tensor ParamFactory::make(std::string_view name, Shape shape, Init init, double value) {
  std::size_t n = numel_of(shape);
  *count_ += n;
  if (counting_) return Tensor();
  Tensor t(std::move(shape), dtype_);
  switch (init) {
    case Init::TruncNormal: {
      Rng r = stream(name);
      for (auto& x : t.data()) x = r.trunc_normal(value);
      break;
    }
    case Init::Zeros:
      break;
    case Init::Ones:
      t.fill(1.0);
      break;
    case Init::Constant:
      t.fill(value);
      break;
  }
  t.normalize_precision();
  return t;
}

Tensor ParamFactory::custom(std::string_view name, Shape shape, const std::function<double(Rng&, std::size_t)>& fill) {
  std::size_t n = numel_of(shape);
  *count_ += n;
  if (counting_) return Tensor();
  Tensor t(std::move(shape), dtype_);
  Rng r = stream(name);
  for (std::size_t i = 0; i < n; ++i) t[i] = fill(r, i);
  t.normalize_precision();
  return t;
}

ParamFactory ParamFactory::scoped(std::string_view prefix) const {
  ParamFactory child = *this;
  child.prefix_ = prefix_ + std::string(prefix) + ".";
  return child;
}

Linear Linear::make(ParamFactory& f, std::string_view name, std::size_t in, std::size_t out, bool bias) {
  std::string n(name);
  Linear l;
  l.weight = f.weight(n + ".weight", {out, in});
  if (bias) l.bias = f.zeros(n + ".bias", {out});
  return l;
}

Linear Linear::make_fan_in(ParamFactory& f, std::string_view name, std::size_t in, std::size_t out, bool bias) {
  std::string n(name);
  Linear l;
  l.weight = f.make(n + ".weight", {out, in}, ParamFactory::Init::TruncNormal, 1.0 / std::sqrt(static_cast<double>(in)));
  if (bias) l.bias = f.zeros(n + ".bias", {out});
  return l;
}

Var Linear::operator()(Tape* tape, const Var& x) const {
  return linear(x, param(tape, weight), bias.empty() ? Var{} : param(tape, bias));
}

void Linear::visit(const std::string& prefix, const ParamVisitor& v) {
  visit_if(v, prefix + ".weight", weight);
  visit_if(v, prefix + ".bias", bias);
}

LayerNorm LayerNorm::make(ParamFactory& f, std::string_view name, std::size_t channels) {
  std::string n(name);
  return LayerNorm{f.ones(n + ".gamma", {channels}), f.zeros(n + ".beta", {channels})};
}

Var LayerNorm::operator()(Tape* tape, const Var& x) const {
  return layernorm_channels(x, param(tape, gamma), param(tape, beta));
}

void LayerNorm::visit(const std::string& prefix, const ParamVisitor& v) {
  visit_if(v, prefix + ".gamma", gamma);
  visit_if(v, prefix + ".beta", beta);
}

}  // namespace sparx
