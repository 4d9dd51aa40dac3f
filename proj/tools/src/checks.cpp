// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparx_tools/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <set>

#include <json.hpp>

#include "sparx/analysis/analysis.hpp"
#include "sparx/backbone/model.hpp"
#include "sparx/blocks/blocks.hpp"
#include "sparx/common/error.hpp"
#include "sparx/dmca/dmca.hpp"
#include "sparx_tools/oracle.hpp"

namespace sparx::tools {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double stddev = 1.0) {
  Tensor t(std::move(shape), DType::F64);
  for (auto& v : t.data()) v = stddev * rng.normal();
  return t;
}

/// Loss sum(out * R) with R drawn once per scenario.
struct Probe {
  Tensor r;
  Var operator()(const Var& out) {
    if (r.empty()) {
      Rng rng(out.numel());
      r = random_tensor(out.shape(), rng);
    }
    return sum(out * Var::borrow(r));
  }
};

std::vector<Tensor*> collect(const std::function<void(const ParamVisitor&)>& visit) {
  std::vector<Tensor*> out;
  visit([&out](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

/// Component scenarios move every parameter off its init so that the
/// nonlinearities are exercised away from the near-linear regime.
GradCheckResult run(const ScalarFn& f, std::vector<Tensor*> params, std::uint64_t seed, double fraction,
                    bool jitter = true) {
  if (jitter) {
    Rng rng = Rng(seed).split("jitter");
    for (Tensor* t : params)
      for (auto& v : t->data()) v += 0.3 * rng.normal();
  }
  GradCheckOptions o;
  o.seed = seed;
  o.sample_fraction = fraction;
  return grad_check(f, params, 1e-5, o);
}

}  // namespace

std::vector<std::string> grad_check_components() {
  return {"dpe", "convffn", "window_attn", "selective_scan", "ss2d", "bissm", "dmca", "vss_block", "model"};
}

GradCheckResult component_grad_check(std::string_view component, std::uint64_t seed, double fraction) {
  Rng rng = Rng(seed).split(component);
  ParamFactory f(rng.split("params"), DType::F64);
  Probe probe;
  if (component == "dpe") {
    auto p = blocks::Dpe::make(f, "dpe", 3);
    for (auto& v : p.kernel.data()) v = rng.normal();
    Tensor x = random_tensor({3, 4, 4}, rng);
    auto fn = [&](Tape* t) { return probe(p(t, param(t, x))); };
    return run(fn, {&p.kernel, &x}, seed, fraction);
  }
  if (component == "convffn") {
    auto p = blocks::ConvFfn::make(f, "ffn", 2, 2);
    Tensor x = random_tensor({2, 3, 3}, rng);
    auto fn = [&](Tape* t) { return probe(p(t, param(t, x))); };
    auto params = collect([&](const ParamVisitor& v) { p.visit("ffn", v); });
    params.push_back(&x);
    return run(fn, params, seed, fraction);
  }
  if (component == "window_attn") {
    auto p = blocks::WindowAttention::make(f, "attn", 4, 2, 2);
    for (auto& v : p.rel_bias.data()) v = 0.5 * rng.normal();
    Tensor x = random_tensor({4, 4, 4}, rng);
    auto fn = [&](Tape* t) {
      Var xv = param(t, x);
      return probe(p(t, xv, true) + p(t, xv, false));
    };
    auto params = collect([&](const ParamVisitor& v) { p.visit("attn", v); });
    params.push_back(&x);
    return run(fn, params, seed, fraction);
  }
  if (component == "selective_scan") {
    auto p = blocks::SsmParams::make(f, "ssm", 3, 2);
    Tensor x = random_tensor({3, 5}, rng);
    auto fn = [&](Tape* t) { return probe(blocks::selective_scan_1d(t, param(t, x), p)); };
    auto params = collect([&](const ParamVisitor& v) { p.visit("ssm", v); });
    params.push_back(&x);
    return run(fn, params, seed, fraction);
  }
  if (component == "ss2d") {
    std::vector<blocks::SsmParams> dirs;
    for (int d = 0; d < 4; ++d) dirs.push_back(blocks::SsmParams::make(f, "ss2d." + std::to_string(d), 2, 2));
    Tensor x = random_tensor({2, 4, 4}, rng);
    auto fn = [&](Tape* t) { return probe(blocks::ss2d_forward(t, param(t, x), dirs)); };
    auto params = collect([&](const ParamVisitor& v) {
      for (std::size_t d = 0; d < dirs.size(); ++d) dirs[d].visit("ss2d." + std::to_string(d), v);
    });
    params.push_back(&x);
    return run(fn, params, seed, fraction);
  }
  if (component == "bissm") {
    auto fw = blocks::SsmParams::make(f, "fwd", 2, 2);
    auto bw = blocks::SsmParams::make(f, "bwd", 2, 2);
    Tensor x = random_tensor({2, 3, 4}, rng);
    auto fn = [&](Tape* t) { return probe(blocks::bissm_forward(t, param(t, x), fw, bw)); };
    auto params = collect([&](const ParamVisitor& v) {
      fw.visit("fwd", v);
      bw.visit("bwd", v);
    });
    params.push_back(&x);
    return run(fn, params, seed, fraction);
  }
  if (component == "dmca") {
    dmca::DmcaConfig cfg;
    cfg.channels = 4;
    cfg.num_inputs = 2;
    cfg.groups = 2;
    cfg.reducer_stride = 2;
    auto p = dmca::DmcaParams::make(f, "dmca", cfg);
    for (Tensor* r : {&p.r1, &p.r2})
      for (auto& v : r->data()) v += 0.1 * rng.normal();
    Tensor x = random_tensor({4, 4, 4}, rng);
    Tensor y1 = random_tensor({4, 4, 4}, rng), y2 = random_tensor({4, 4, 4}, rng);
    auto fn = [&](Tape* t) { return probe(dmca::dmca_forward(t, param(t, x), {param(t, y1), param(t, y2)}, p)); };
    auto params = collect([&](const ParamVisitor& v) { p.visit("dmca", v); });
    params.insert(params.end(), {&x, &y1, &y2});
    return run(fn, params, seed, fraction);
  }
  if (component == "vss_block") {
    auto p = blocks::VssBlock::make(f, "vss", blocks::MixerKind::Ss2d, 2, blocks::MixerOptions{});
    Tensor x = random_tensor({2, 4, 4}, rng);
    auto fn = [&](Tape* t) { return probe(p(t, param(t, x))); };
    auto params = collect([&](const ParamVisitor& v) { p.visit("vss", v); });
    params.push_back(&x);
    return run(fn, params, seed, fraction);
  }
  if (component == "model") {
    auto cfg = model::variant("tiny-reduced");
    cfg.dtype = DType::F64;
    auto p = model::build(cfg, seed);
    Tensor image = random_tensor({3, cfg.input_size, cfg.input_size}, rng);
    auto fn = [&](Tape* t) { return cross_entropy(model::forward(p, t, Var::borrow(image)).logits, 1); };
    auto params = collect([&](const ParamVisitor& v) { p.visit(v); });
    return run(fn, params, seed, fraction, false);
  }
  fail<ConfigError>("unknown grad-check component '", component, "'");
}

double window_attention_dense_gap(std::uint64_t seed) {
  constexpr std::size_t c = 4, hd = 2, side = 4, n = side * side;
  Rng rng = Rng(seed).split("dense_attention");
  ParamFactory f(rng.split("params"), DType::F64);
  auto p = blocks::WindowAttention::make(f, "attn", c, side, hd);
  for (auto& v : p.rel_bias.data()) v = 0.5 * rng.normal();
  for (auto& v : p.qkv.bias.data()) v = 0.1 * rng.normal();
  Tensor x = random_tensor({c, side, side}, rng);
  Tensor got = p(nullptr, Var::borrow(x), false).value();

  const std::size_t heads = c / hd, span = 2 * side - 1;
  const Tensor &wq = p.qkv.weight, &bq = p.qkv.bias;
  std::vector<double> qkv(3 * c * n, 0.0);  // [feature][token]
  for (std::size_t o = 0; o < 3 * c; ++o)
    for (std::size_t t = 0; t < n; ++t) {
      double s = bq[o];
      for (std::size_t i = 0; i < c; ++i) s += wq[o * c + i] * x[i * n + t];
      qkv[o * n + t] = s;
    }
  std::vector<double> mixed(c * n, 0.0);
  for (std::size_t hh = 0; hh < heads; ++hh)
    for (std::size_t t1 = 0; t1 < n; ++t1) {
      std::vector<double> logit(n);
      double mx = -1e300;
      for (std::size_t t2 = 0; t2 < n; ++t2) {
        double s = 0.0;
        for (std::size_t d = 0; d < hd; ++d) s += qkv[(hh * hd + d) * n + t1] * qkv[(c + hh * hd + d) * n + t2];
        std::size_t dy = t1 / side + side - 1 - t2 / side, dx = t1 % side + side - 1 - t2 % side;
        logit[t2] = s / std::sqrt(static_cast<double>(hd)) + p.rel_bias[(dy * span + dx) * heads + hh];
        mx = std::max(mx, logit[t2]);
      }
      double z = 0.0;
      for (auto& l : logit) z += (l = std::exp(l - mx));
      for (std::size_t d = 0; d < hd; ++d) {
        double s = 0.0;
        for (std::size_t t2 = 0; t2 < n; ++t2) s += logit[t2] / z * qkv[(2 * c + hh * hd + d) * n + t2];
        mixed[(hh * hd + d) * n + t1] = s;
      }
    }
  double gap = 0.0;
  for (std::size_t o = 0; o < c; ++o)
    for (std::size_t t = 0; t < n; ++t) {
      double s = p.proj.bias[o];
      for (std::size_t i = 0; i < c; ++i) s += p.proj.weight[o * c + i] * mixed[i * n + t];
      gap = std::max(gap, std::abs(s - got[o * n + t]));
    }
  return gap;
}

double attention_row_sum_error(std::size_t trials, std::uint64_t seed, bool sabotaged) {
  Rng rng = Rng(seed).split("row_sums");
  double worst = 0.0;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    std::size_t g = 1 + rng.below(4), cg = 1 + rng.below(8), nr = 1 + rng.below(49);
    Var q = Var::constant(random_tensor({g, cg, nr}, rng, 3.0));
    Var k = Var::constant(random_tensor({g, cg, nr}, rng, 3.0));
    Var v = Var::constant(random_tensor({g, cg, nr * 4}, rng));
    Var a;
    if (sabotaged)
      a = exp(scale(matmul(q, transpose_last2(k)), 1.0 / std::sqrt(static_cast<double>(nr))));
    else
      dmca::cgca(q, k, v, &a);
    const Tensor& m = a.value();
    for (std::size_t row = 0; row < g * cg; ++row) {
      double s = 0.0;
      for (std::size_t j = 0; j < cg; ++j) s += m[row * cg + j];
      worst = std::max(worst, std::abs(s - 1.0));
    }
  }
  return worst;
}

double ss2d_transpose_gap(std::uint64_t seed) {
  Rng rng = Rng(seed).split("ss2d_transpose");
  ParamFactory f(rng.split("params"), DType::F64);
  std::vector<blocks::SsmParams> dirs;
  for (int d = 0; d < 4; ++d) dirs.push_back(blocks::SsmParams::make(f, "d" + std::to_string(d), 3, 2));
  const std::size_t c = 3, h = 3, w = 5;
  Tensor x = random_tensor({c, h, w}, rng);
  Tensor xt({c, w, h}, DType::F64);
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) xt[(k * w + j) * h + i] = x[(k * h + i) * w + j];
  std::vector<blocks::SsmParams> swapped{dirs[2], dirs[3], dirs[0], dirs[1]};
  Tensor a = blocks::ss2d_forward(nullptr, Var::borrow(x), dirs).value();
  Tensor b = blocks::ss2d_forward(nullptr, Var::borrow(xt), swapped).value();
  double gap = 0.0;
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) gap = std::max(gap, std::abs(a[(k * h + i) * w + j] - b[(k * w + j) * h + i]));
  return gap;
}

Tensor random_orthogonal(std::size_t d, std::uint64_t seed) {
  Rng rng = Rng(seed).split("orthogonal");
  Tensor q({d, d}, DType::F64);
  for (std::size_t col = 0; col < d; ++col) {
    std::vector<double> v(d);
    for (auto& e : v) e = rng.normal();
    for (std::size_t prev = 0; prev < col; ++prev) {
      double dot = 0.0;
      for (std::size_t r = 0; r < d; ++r) dot += v[r] * q[r * d + prev];
      for (std::size_t r = 0; r < d; ++r) v[r] -= dot * q[r * d + prev];
    }
    double norm = 0.0;
    for (double e : v) norm += e * e;
    norm = std::sqrt(norm);
    for (std::size_t r = 0; r < d; ++r) q[r * d + col] = v[r] / norm;
  }
  return q;
}

// -- suite --------------------------------------------------------------------

namespace {

class Suite {
 public:
  void add(std::string name, double tolerance, std::string relation, const std::function<double(std::string&)>& fn) {
    CheckResult r;
    r.name = std::move(name);
    r.tolerance = tolerance;
    r.relation = std::move(relation);
    try {
      r.measured = fn(r.detail);
      if (r.relation == "<=") r.passed = r.measured <= tolerance;
      else if (r.relation == "==") r.passed = r.measured == tolerance;
      else if (r.relation == ">=") r.passed = r.measured >= tolerance;
      else r.passed = false;
      if (!std::isfinite(r.measured)) r.passed = false;
    } catch (const std::exception& e) {
      r.passed = false;
      r.measured = std::nan("");
      r.detail = std::string("exception: ") + e.what();
    }
    results.push_back(std::move(r));
  }
  std::vector<CheckResult> results;
};

double flag(bool ok) { return ok ? 1.0 : 0.0; }

topo::StageTopologyConfig stage(std::size_t n, std::size_t s, std::size_t m, topo::ConnectivityMode mode,
                                bool cross = false) {
  return topo::StageTopologyConfig{n, s, m, mode, std::nullopt, cross};
}

analysis::FeatureMatrix random_features(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  return analysis::center(random_tensor({n, d}, rng));
}

analysis::FeatureMatrix times(const analysis::FeatureMatrix& a, const Tensor& q, double factor) {
  const std::size_t n = a.rows(), d = a.cols();
  Tensor out({n, d}, DType::F64);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += a.data[i * d + k] * q[k * d + j];
      out[i * d + j] = factor * s;
    }
  return analysis::center(out);
}

analysis::ErfMap conv_erf(std::size_t convs, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> kernels;
  for (std::size_t i = 0; i < convs; ++i) {
    Tensor k({2, 3, 3}, DType::F64);
    for (auto& v : k.data()) v = 1.0 + std::abs(rng.normal());
    kernels.push_back(k);
  }
  Tensor img = random_tensor({2, 11, 11}, rng);
  return analysis::erf_of(
      [&](Tape* t, const Var& x) {
        Var y = x;
        for (auto& k : kernels) y = dwconv3x3_pad1(y, param(t, k));
        return y;
      },
      {img});
}

}  // namespace

std::vector<CheckResult> run_verify(const VerifyOptions& opts) {
  using topo::ConnectivityMode;
  Suite s;
  const std::uint64_t seed = opts.seed;

  s.add("topology.oracle_sweep", 0, "==", [](std::string& d) {
    auto r = sweep_topology_oracle();
    d = std::to_string(r.configs) + " configs, " + std::to_string(r.seconds) + " s";
    for (auto& f : r.first_failures) d += "; " + f;
    return static_cast<double>(r.mismatches);
  });
  s.add("topology.worked_example_ganglia", 1, "==", [](std::string& d) {
    auto p = topo::plan_stage(stage(8, 2, 2, ConnectivityMode::Sparx));
    d = "ganglia of 8 layers at S=2";
    return flag(p.ganglion_indices() == std::vector<std::size_t>{2, 4, 6, 8} &&
                p.normal_indices() == std::vector<std::size_t>{1, 3, 5, 7});
  });
  s.add("topology.window_sources", 1, "==", [](std::string& d) {
    auto p = topo::plan_stage(stage(8, 2, 2, ConnectivityMode::Sparx));
    d = "layer 8 inter {4,6} intra {7}; layer 2 intra {1}";
    return flag(p.layer(8).inter_sources == std::vector<std::size_t>{4, 6} &&
                p.layer(8).intra_sources == std::vector<std::size_t>{7} && p.layer(2).inter_sources.empty() &&
                p.layer(2).intra_sources == std::vector<std::size_t>{1});
  });
  s.add("topology.plain_cross_rejected", 1, "==", [](std::string& d) {
    try {
      topo::plan_stage(stage(4, 2, 2, ConnectivityMode::Plain, true));
    } catch (const ConfigError& e) {
      d = e.what();
      return 1.0;
    }
    return 0.0;
  });
  s.add("topology.dot_edges_match_plan", 0, "==", [](std::string& d) {
    auto p = topo::plan_stage(stage(8, 2, 2, ConnectivityMode::Sparx));
    std::string dot = topo::to_dot(p);
    double missing = 0;
    std::size_t edges = 0;
    for (const auto& l : p.layers)
      for (std::size_t src : l.sources()) {
        ++edges;
        std::string e = "L" + std::to_string(src) + " -> L" + std::to_string(l.index) + " [kind=";
        missing += dot.find(e + "intra") == std::string::npos && dot.find(e + "inter") == std::string::npos;
      }
    std::size_t dashed = 0;
    for (std::size_t pos = 0; (pos = dot.find("style=dashed", pos)) != std::string::npos; ++pos) ++dashed;
    d = std::to_string(edges) + " source edges";
    return missing + std::abs(static_cast<double>(dashed) - static_cast<double>(edges));
  });
  s.add("cache.forward_matches_schedule", 0, "==", [seed](std::string& d) {
    auto cfg = model::variant("tiny-reduced");
    cfg.blocks = {1, 3, 5, 2};
    auto p = model::build(cfg, seed);
    Rng rng(seed);
    Tensor img = random_tensor({3, 32, 32}, rng);
    auto res = model::forward(p, nullptr, Var::constant(img.to(cfg.dtype)));
    auto plans = model::plan_model(cfg);
    double bad = 0;
    for (std::size_t st = 0; st < plans.size(); ++st) {
      auto sched = topo::cache_schedule(plans[st], 1);
      for (std::size_t i = 0; i < sched.steps.size(); ++i) bad += res.cache_trace[st][i] != sched.steps[i].live_set;
    }
    d = "per-step cache keys vs live sets, all stages";
    return bad;
  });
  s.add("cost_model.matches_schedule", 0, "==", [](std::string& d) {
    double bad = 0;
    std::size_t n_cfg = 0;
    for (auto mode : {ConnectivityMode::Sparx, ConnectivityMode::Dgc, ConnectivityMode::Dsn})
      for (std::size_t n = 2; n <= 12; ++n)
        for (std::size_t st = 1; st <= 4; ++st)
          for (std::size_t m = 1; m <= 4; ++m) {
            auto cfg = stage(n, st, m, mode);
            auto cm = analysis::cost_model(cfg, 4);
            auto sched = topo::cache_schedule(topo::plan_stage(cfg), 4);
            bad += cm.peak_features != sched.peak_live_count || cm.peak_bytes != sched.peak_live_bytes;
            ++n_cfg;
          }
    d = std::to_string(n_cfg) + " configs";
    return bad;
  });
  s.add("cost_model.training_ordering", 1, "==", [](std::string& d) {
    auto a = analysis::cost_model(stage(7, 2, 3, ConnectivityMode::Sparx), 4);
    auto b = analysis::cost_model(stage(7, 2, 3, ConnectivityMode::Dgc), 4);
    auto c = analysis::cost_model(stage(7, 2, 3, ConnectivityMode::Dsn), 4);
    auto p = analysis::cost_model(stage(7, 2, 3, ConnectivityMode::Plain), 4);
    d = "resident features sparx " + std::to_string(a.training_features) + ", dgc " +
        std::to_string(b.training_features) + ", dsn " + std::to_string(c.training_features) + ", plain peak " +
        std::to_string(p.peak_features);
    return flag(a.training_features < b.training_features && b.training_features < c.training_features &&
                p.peak_features == 1 && p.concat_macs == 0);
  });
  s.add("cost_model.concat_monotone_in_window", 1, "==", [](std::string& d) {
    std::uint64_t prev = 0;
    bool ok = true;
    for (std::size_t m = 1; m <= 4; ++m) {
      auto cm = analysis::cost_model(stage(12, 2, m, ConnectivityMode::Sparx), 4);
      ok = ok && cm.concat_macs > prev;
      d += (m > 1 ? "," : "") + std::to_string(cm.concat_macs);
      prev = cm.concat_macs;
    }
    return flag(ok);
  });
  s.add("memory.tiny_ordering", 1, "==", [](std::string& d) {
    auto cfg = model::variant("tiny");
    auto a = model::memory_report(cfg, 224, ConnectivityMode::Sparx);
    auto b = model::memory_report(cfg, 224, ConnectivityMode::Dgc);
    auto c = model::memory_report(cfg, 224, ConnectivityMode::Dsn);
    auto p = model::memory_report(cfg, 224, ConnectivityMode::Plain);
    d = "training-resident bytes " + std::to_string(a.training_bytes) + " < " + std::to_string(b.training_bytes) +
        " < " + std::to_string(c.training_bytes) + "; plain " + std::to_string(p.training_bytes);
    return flag(a.training_bytes < b.training_bytes && b.training_bytes < c.training_bytes &&
                p.training_bytes < a.training_bytes && p.inference_peak_bytes <= a.inference_peak_bytes);
  });
  const bool sabotage = opts.sabotage == "softmax";
  s.add("dmca.softmax_rows_sum_to_one", 1e-6, "<=", [seed, sabotage](std::string& d) {
    d = sabotage ? "100 trials, normalization sabotaged" : "100 trials";
    return attention_row_sum_error(100, seed, sabotage);
  });
  s.add("dmca.attention_shape_independent", 1, "==", [seed](std::string& d) {
    std::set<Shape> shapes;
    for (std::size_t side : {7, 14, 28, 56}) {
      dmca::DmcaConfig cfg;
      cfg.channels = 8;
      cfg.num_inputs = 2;
      cfg.reducer_stride = dmca::reducer_stride_for(side * side, 49);
      ParamFactory f(Rng(seed), DType::F64);
      auto p = dmca::DmcaParams::make(f, "dmca", cfg);
      Rng rng(side);
      Var x = Var::constant(random_tensor({8, side, side}, rng));
      Var y1 = Var::constant(random_tensor({8, side, side}, rng)), y2 = Var::constant(random_tensor({8, side, side}, rng));
      dmca::DmcaTrace tr;
      dmca::dmca_forward(nullptr, x, {y1, y2}, p, &tr);
      shapes.insert(tr.attn);
    }
    d = "N in {49,196,784,3136}, attention " + to_string(*shapes.begin());
    return flag(shapes.size() == 1 && *shapes.begin() == Shape{4, 2, 2});
  });
  s.add("dmca.w1_param_count", 24704, "==", [](std::string& d) {
    ParamFactory f(Rng(0), DType::F32);
    dmca::DmcaConfig cfg;
    cfg.channels = 64;
    cfg.num_inputs = 3;
    cfg.reducer_stride = 2;
    auto p = dmca::DmcaParams::make(f, "dmca", cfg);
    d = "C=64, L=3";
    return static_cast<double>(p.w1.weight.numel() + p.w1.bias.numel());
  });
  for (const auto& comp : grad_check_components()) {
    bool full = comp == "model";
    s.add("grad." + comp, full ? 1e-3 : 1e-4, "<=", [comp, seed, full](std::string& d) {
      auto r = component_grad_check(comp, seed, full ? 0.01 : 1.0);
      d = std::to_string(r.elements_checked) + " elements, worst " + r.worst;
      return r.max_rel_error;
    });
  }
  s.add("window_attn.dense_oracle", 1e-6, "<=", [seed](std::string& d) {
    d = "4x4 map, window 4, 2 heads";
    return window_attention_dense_gap(seed);
  });
  s.add("ss2d.transpose_equivariance", 1e-12, "<=", [seed](std::string& d) {
    d = "3x5 map, row and column directions swapped";
    return ss2d_transpose_gap(seed);
  });
  s.add("cka.self_similarity", 1e-6, "<=", [seed](std::string&) {
    auto a = random_features(16, 8, seed);
    return std::abs(analysis::cka_linear(a, a) - 1.0);
  });
  s.add("cka.orthogonal_invariance", 1e-6, "<=", [seed](std::string& d) {
    auto a = random_features(16, 8, seed);
    d = "A vs 2.5 * A Q";
    return std::abs(analysis::cka_linear(a, times(a, random_orthogonal(8, seed), 2.5)) - 1.0);
  });
  s.add("cka.matrix_symmetry", 1e-6, "<=", [seed](std::string&) {
    std::vector<analysis::FeatureMatrix> layers;
    for (std::uint64_t k = 0; k < 4; ++k) layers.push_back(random_features(12, 5 + k, seed + k));
    Tensor m = analysis::cka_matrix(layers);
    double gap = 0.0;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) gap = std::max(gap, std::abs(m[i * 4 + j] - m[j * 4 + i]));
    for (std::size_t i = 0; i < 4; ++i) gap = std::max(gap, std::abs(m[i * 5] - 1.0));
    return gap;
  });
  s.add("erf.single_conv_support", 9, "==", [seed](std::string& d) {
    auto e = conv_erf(1, seed);
    auto [eh, ew] = e.support_extent();
    d = "extent " + std::to_string(eh) + "x" + std::to_string(ew);
    return eh == 3 && ew == 3 ? static_cast<double>(e.support()) : -1.0;
  });
  s.add("erf.stacked_conv_support", 25, "==", [seed](std::string& d) {
    auto e = conv_erf(2, seed);
    auto [eh, ew] = e.support_extent();
    d = "extent " + std::to_string(eh) + "x" + std::to_string(ew);
    return eh == 5 && ew == 5 ? static_cast<double>(e.support()) : -1.0;
  });
  s.add("erf.stage4_contains_stage1", 0, "==", [seed](std::string& d) {
    auto cfg = model::variant("tiny-reduced");
    cfg.dtype = DType::F64;
    cfg.input_size = 64;
    auto p = model::build(cfg, seed);
    Rng rng(seed);
    std::vector<Tensor> imgs{random_tensor({3, 64, 64}, rng), random_tensor({3, 64, 64}, rng)};
    auto e1 = analysis::erf(p, 1, imgs), e4 = analysis::erf(p, 4, imgs);
    double missing = 0;
    for (std::size_t i = 0; i < e1.map.numel(); ++i) missing += e1.map[i] > 1e-6 && !(e4.map[i] > 1e-6);
    d = "support stage1 " + std::to_string(e1.support()) + ", stage4 " + std::to_string(e4.support());
    return missing;
  });
  s.add("accounting.tiny_params_rel_error", 0.10, "<=", [](std::string& d) {
    double n = static_cast<double>(model::count_params(model::variant("tiny")));
    d = std::to_string(n / 1e6) + " M vs 27.1 M";
    return std::abs(n / 27.1e6 - 1.0);
  });
  s.add("accounting.tiny_flops_rel_error", 0.15, "<=", [](std::string& d) {
    double g = static_cast<double>(model::count_flops(model::variant("tiny"), 224).total());
    d = std::to_string(g / 1e9) + " G vs 5.2 G";
    return std::abs(g / 5.2e9 - 1.0);
  });
  s.add("accounting.resolution_ratio_in_range", 1, "==", [](std::string& d) {
    auto cfg = model::variant("tiny");
    double r = static_cast<double>(model::count_flops(cfg, 384).total()) /
               static_cast<double>(model::count_flops(cfg, 224).total());
    auto cfg384 = cfg;
    cfg384.input_size = 384;
    d = "ratio " + std::to_string(r);
    return flag(r >= 2.9 && r <= 3.1 && model::count_params(cfg) == model::count_params(cfg384));
  });
  s.add("mixer.plans_identical", 1, "==", [](std::string& d) {
    auto base = model::variant("tiny-reduced");
    auto ref = model::plan_model(base);
    bool ok = true;
    for (auto kind : {blocks::MixerKind::Ssm, blocks::MixerKind::Bissm, blocks::MixerKind::WindowAttn}) {
      auto c = base;
      c.mixer_kind = kind;
      ok = ok && model::plan_model(c) == ref;
    }
    d = "ss2d, ssm, bissm, window_attn";
    return flag(ok);
  });
  s.add("model.forward_deterministic", 1, "==", [seed](std::string&) {
    auto cfg = model::variant("tiny-reduced");
    Rng rng(seed);
    Tensor img = random_tensor({3, 32, 32}, rng).to(cfg.dtype);
    Tensor a = model::forward(model::build(cfg, seed), nullptr, Var::borrow(img)).logits.value();
    Tensor b = model::forward(model::build(cfg, seed), nullptr, Var::borrow(img)).logits.value();
    return flag(a == b);
  });
  return s.results;
}

std::string verify_report_json(const std::vector<CheckResult>& results) {
  nlohmann::ordered_json j;
  std::size_t passed = 0;
  auto checks = nlohmann::ordered_json::array();
  for (const auto& r : results) {
    passed += r.passed;
    nlohmann::ordered_json c;
    c["name"] = r.name;
    c["passed"] = r.passed;
    c["measured"] = std::isfinite(r.measured) ? nlohmann::ordered_json(r.measured) : nlohmann::ordered_json(nullptr);
    c["relation"] = r.relation;
    c["tolerance"] = r.tolerance;
    c["detail"] = r.detail;
    checks.push_back(std::move(c));
  }
  j["total"] = results.size();
  j["passed"] = passed;
  j["failed"] = results.size() - passed;
  j["checks"] = std::move(checks);
  return j.dump(2) + "\n";
}

}  // namespace sparx::tools
