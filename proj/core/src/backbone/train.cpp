// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sparx/backbone/model.hpp"
#include "sparx/common/error.hpp"

namespace sparx::model {

std::vector<ToySample> make_toy_dataset(std::size_t samples, std::size_t size, std::uint64_t seed) {
  check<ConfigError>(samples >= 2 && size >= 2, "toy dataset needs >= 2 samples and side >= 2");
  Rng root(seed);
  std::vector<ToySample> data;
  for (std::size_t i = 0; i < samples; ++i) {
    Rng r = root.split(i);
    ToySample s;
    s.label = i % 2;
    s.image = Tensor({3, size, size}, DType::F64);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
          bool left = x < size / 2;
          bool bright = s.label == 0 ? left : !left;
          s.image[(c * size + y) * size + x] = (bright ? 1.0 : -1.0) + 0.25 * r.normal();
        }
    data.push_back(std::move(s));
  }
  return data;
}

namespace {

Var input_of(const ModelParams& p, const Tensor& image) {
  return image.dtype() == p.cfg.dtype ? Var::borrow(image) : Var::constant(image.to(p.cfg.dtype));
}

std::size_t argmax(const Tensor& t) {
  auto d = t.data();
  return static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
}

}  // namespace

double accuracy(const ModelParams& p, const std::vector<ToySample>& data) {
  check<ConfigError>(!data.empty(), "accuracy: empty dataset");
  std::size_t hits = 0;
  for (const auto& s : data) hits += argmax(forward(p, nullptr, input_of(p, s.image)).logits.value()) == s.label;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

TrainResult train_toy(ModelParams& p, const std::vector<ToySample>& data, const TrainConfig& tc) {
  check<ConfigError>(p.cfg.dtype == DType::F64, "train_toy: model must be built in f64");
  check<ConfigError>(!data.empty() && tc.batch >= 1, "train_toy: needs data and batch >= 1");
  check<ConfigError>(std::isfinite(tc.lr) && tc.lr >= 0.0, "train_toy: lr must be finite and >= 0");
  std::vector<Tensor*> params;
  p.visit([&params](const std::string&, Tensor& t) { params.push_back(&t); });
  if (tc.zero_init_head) {
    p.head.fc.weight.fill(0.0);
    p.head.fc.bias.fill(0.0);
  }

  Rng rng = Rng(tc.seed).split("train_toy.order");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  TrainResult res;
  std::vector<Tensor> acc;
  for (Tensor* t : params) acc.emplace_back(t->shape(), DType::F64);
  for (std::size_t step = 0; step < tc.steps; ++step) {
    for (auto& a : acc) a.fill(0.0);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < tc.batch; ++b) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        cursor = 0;
      }
      const ToySample& s = data[order[cursor++]];
      Tape tape;
      Var loss;
      try {
        loss = cross_entropy(forward(p, &tape, input_of(p, s.image)).logits, s.label);
      } catch (const NumericError& e) {
        fail<NumericError>("train_toy: step ", step + 1, ": ", e.what());
      }
      double lv = loss.value().item();
      if (!std::isfinite(lv)) fail<NumericError>("train_toy: non-finite loss at step ", step + 1);
      loss_sum += lv;
      auto grads = tape.backward(loss);
      for (std::size_t k = 0; k < params.size(); ++k) {
        const Tensor& g = grads.wrt(*params[k]);
        auto ad = acc[k].data();
        auto gd = g.data();
        for (std::size_t j = 0; j < ad.size(); ++j) ad[j] += gd[j];
      }
    }
    double inv = 1.0 / static_cast<double>(tc.batch);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto pd = params[k]->data();
      auto ad = acc[k].data();
      for (std::size_t j = 0; j < pd.size(); ++j) pd[j] -= tc.lr * (ad[j] * inv);
    }
    res.losses.push_back(loss_sum * inv);
    res.steps_run = step + 1;
  }
  res.final_accuracy = accuracy(p, data);
  return res;
}

}  // namespace sparx::model
