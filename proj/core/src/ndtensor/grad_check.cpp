// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparx/ndtensor/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "sparx/common/error.hpp"
#include "sparx/common/rng.hpp"

namespace sparx {

GradCheckResult grad_check(const ScalarFn& f, std::span<Tensor* const> params, double h,
                           const GradCheckOptions& opts) {
  for (const Tensor* p : params) check(p->dtype() == DType::F64, "grad_check requires f64 parameters");

  std::vector<Tensor> analytic;
  {
    Tape tape;
    for (Tensor* p : params) tape.leaf(*p);
    Var loss = f(&tape);
    check(loss.tracked(), "grad_check: loss does not depend on any parameter");
    Gradients g = tape.backward(loss);
    for (Tensor* p : params) analytic.push_back(g.wrt(*p));
  }

  Rng rng(opts.seed);
  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    std::vector<std::size_t> probe;
    if (opts.sample_fraction >= 1.0) {
      probe.resize(p.numel());
      for (std::size_t i = 0; i < p.numel(); ++i) probe[i] = i;
    } else {
      for (std::size_t i = 0; i < p.numel(); ++i)
        if (rng.uniform() < opts.sample_fraction) probe.push_back(i);
    }
    for (std::size_t i : probe) {
      double saved = p[i];
      p[i] = saved + h;
      double up = f(nullptr).value().item();
      p[i] = saved - h;
      double down = f(nullptr).value().item();
      p[i] = saved;
      double numeric = (up - down) / (2.0 * h);
      double a = analytic[pi][i];
      double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++result.elements_checked;
      if (rel > result.max_rel_error || result.worst.empty()) {
        if (rel >= result.max_rel_error) {
          result.max_rel_error = rel;
          result.worst = std::to_string(pi) + "#" + std::to_string(i);
        }
      }
    }
  }
  return result;
}

}  // namespace sparx
