// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparx/analysis/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sparx/common/error.hpp"
#include "sparx/ndtensor/ops.hpp"

namespace sparx::analysis {

FeatureMatrix center(const Tensor& m) {
  check(m.rank() == 2, "center: expected (n, d), got ", to_string(m.shape()));
  const std::size_t n = m.dim(0), d = m.dim(1);
  check<ConfigError>(n >= 2, "center: need at least 2 examples, got ", n);
  FeatureMatrix f{Tensor({n, d}, DType::F64), true};
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += m[i * d + j];
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) f.data[i * d + j] = m[i * d + j] - mean;
  }
  return f;
}

FeatureMatrix feature_matrix(const std::vector<Tensor>& examples) {
  check<ConfigError>(!examples.empty(), "feature_matrix: no examples");
  const std::size_t d = examples[0].numel();
  Tensor m({examples.size(), d}, DType::F64);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    check(examples[i].shape() == examples[0].shape(), "feature_matrix: example ", i, " has shape ",
          to_string(examples[i].shape()), ", expected ", to_string(examples[0].shape()));
    for (std::size_t j = 0; j < d; ++j) m[i * d + j] = examples[i][j];
  }
  return center(m);
}

namespace {

std::vector<double> gram(const FeatureMatrix& a) {
  const std::size_t n = a.rows(), d = a.cols();
  std::vector<double> k(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < d; ++t) s += a.data[i * d + t] * a.data[j * d + t];
      k[i * n + j] = k[j * n + i] = s;
    }
  return k;
}

}  // namespace

double cka_linear(const FeatureMatrix& a, const FeatureMatrix& b) {
  check<ConfigError>(a.centered && b.centered, "cka_linear: inputs must be centered");
  check(a.rows() == b.rows(), "cka_linear: example counts differ (", a.rows(), " vs ", b.rows(), ")");
  auto ka = gram(a), kb = gram(b);
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < ka.size(); ++i) {
    ab += ka[i] * kb[i];
    aa += ka[i] * ka[i];
    bb += kb[i] * kb[i];
  }
  if (!(aa > 0.0) || !(bb > 0.0)) fail<NumericError>("cka_linear: zero-variance input (all rows equal)");
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

Tensor cka_matrix(const std::vector<FeatureMatrix>& layers) {
  check<ConfigError>(!layers.empty(), "cka_matrix: no layers");
  const std::size_t k = layers.size();
  for (std::size_t i = 1; i < k; ++i)
    check(layers[i].rows() == layers[0].rows(), "cka_matrix: layer ", i, " has ", layers[i].rows(),
          " examples, layer 0 has ", layers[0].rows());
  Tensor m({k, k}, DType::F64);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i; j < k; ++j) m[i * k + j] = m[j * k + i] = cka_linear(layers[i], layers[j]);
  return m;
}

std::string matrix_csv(const Tensor& m, const std::vector<std::string>& labels) {
  check(m.rank() == 2 && m.dim(0) == m.dim(1) && labels.size() == m.dim(0), "matrix_csv: need a square matrix with ",
        "one label per row");
  const std::size_t k = m.dim(0);
  std::string out = "layer";
  for (const auto& l : labels) out += "," + l;
  out += "\n";
  char buf[32];
  for (std::size_t i = 0; i < k; ++i) {
    out += labels[i];
    for (std::size_t j = 0; j < k; ++j) {
      std::snprintf(buf, sizeof buf, ",%.6f", m[i * k + j]);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

// -- ERF ----------------------------------------------------------------------------

std::size_t ErfMap::support(double threshold) const {
  return static_cast<std::size_t>(
      std::count_if(map.data().begin(), map.data().end(), [threshold](double v) { return v > threshold; }));
}

std::pair<std::size_t, std::size_t> ErfMap::support_extent(double threshold) const {
  const std::size_t h = map.dim(0), w = map.dim(1);
  std::size_t y0 = h, y1 = 0, x0 = w, x1 = 0;
  bool any = false;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      if (map[y * w + x] > threshold) {
        any = true;
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
      }
  if (!any) return {0, 0};
  return {y1 - y0 + 1, x1 - x0 + 1};
}

ErfMap erf_of(const FeatureFn& fn, const std::vector<Tensor>& images) {
  check<ConfigError>(!images.empty(), "erf: no images");
  const Shape in_shape = images[0].shape();
  check(in_shape.size() == 3, "erf: images must be (C,H,W), got ", to_string(in_shape));
  const std::size_t c = in_shape[0], h = in_shape[1], w = in_shape[2];
  Tensor acc({h, w}, DType::F64);
  for (const Tensor& img : images) {
    check(img.shape() == in_shape, "erf: images must share one size");
    Tensor input = img.to(DType::F64);
    Tape tape;
    Var x = tape.leaf(input);
    Var feat = fn(&tape, x);
    check(feat.shape().size() == 3, "erf: feature map must be (C,h,w), got ", to_string(feat.shape()));
    const std::size_t fc = feat.dim(0), fh = feat.dim(1), fw = feat.dim(2);
    auto idx = std::make_shared<std::vector<std::int64_t>>(fc);
    for (std::size_t k = 0; k < fc; ++k) (*idx)[k] = static_cast<std::int64_t>((k * fh + fh / 2) * fw + fw / 2);
    Var center = sum(gather(feat, idx, {fc}));
    auto grads = tape.backward(center);
    const Tensor& g = grads.wrt(input);
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t p = 0; p < h * w; ++p) acc[p] += std::abs(g[k * h * w + p]);
  }
  ErfMap e;
  e.map = Tensor({h, w}, DType::F64);
  double mx = 0.0;
  for (std::size_t p = 0; p < h * w; ++p) {
    double v = acc[p] / static_cast<double>(images.size());
    e.map[p] = v;
    if (v > mx) {
      mx = v;
      e.argmax_y = p / w;
      e.argmax_x = p % w;
    }
  }
  if (mx > 0.0)
    for (auto& v : e.map.data()) v /= mx;
  return e;
}

ErfMap erf(const model::ModelParams& p, std::size_t probe_stage, const std::vector<Tensor>& images) {
  check<ConfigError>(probe_stage >= 1 && probe_stage <= model::kStages, "erf: probe stage ", probe_stage,
                     " outside 1..", model::kStages);
  check<ConfigError>(p.cfg.dtype == DType::F64, "erf: model must be built in f64");
  model::ForwardOptions opts;
  opts.last_stage = probe_stage;
  return erf_of(
      [&](Tape* tape, const Var& x) { return model::forward(p, tape, x, opts).stage_outputs[probe_stage - 1]; },
      images);
}

std::string to_pgm(const Tensor& map) {
  check(map.rank() == 2, "to_pgm: expected (H,W), got ", to_string(map.shape()));
  const std::size_t h = map.dim(0), w = map.dim(1);
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (double v : map.data()) {
    double c = std::clamp(v, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  return out;
}

// -- cost model ---------------------------------------------------------------------

CostModel cost_model(const topo::StageTopologyConfig& cfg, std::size_t bytes_per_feature, std::size_t channels,
                     std::size_t tokens) {
  auto plan = topo::plan_stage(cfg);
  auto sched = topo::cache_schedule(plan, bytes_per_feature);
  CostModel m;
  m.peak_features = sched.peak_live_count;
  m.peak_bytes = sched.peak_live_bytes;
  m.training_features = sched.training_resident_count;
  const std::uint64_t c = channels, n = tokens;
  for (const auto& l : plan.layers)
    if (l.is_ganglion()) m.concat_macs += l.y_count() * c * 2 * c * n;
  return m;
}

}  // namespace sparx::analysis
