// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparx/dmca/dmca.hpp"

#include <algorithm>
#include <cmath>

#include "sparx/common/error.hpp"

namespace sparx::dmca {

using sparx::to_string;

const char* to_string(DmcaMode mode) {
  switch (mode) {
    case DmcaMode::Full: return "full";
    case DmcaMode::Concat: return "concat";
    case DmcaMode::NoCgca: return "no_cgca";
    case DmcaMode::NoSr: return "no_sr";
    case DmcaMode::NoSkip: return "no_skip";
  }
  return "?";
}

DmcaMode parse_mode(std::string_view name) {
  if (name == "full") return DmcaMode::Full;
  if (name == "concat") return DmcaMode::Concat;
  if (name == "no_cgca") return DmcaMode::NoCgca;
  if (name == "no_sr") return DmcaMode::NoSr;
  if (name == "no_skip") return DmcaMode::NoSkip;
  fail<ConfigError>("unknown dmca mode '", name, "' (expected full|concat|no_cgca|no_sr|no_skip)");
}

namespace {

void validate(const DmcaConfig& cfg) {
  check<ConfigError>(cfg.channels >= 1, "dmca: channels must be >= 1");
  check<ConfigError>(cfg.num_inputs >= 1, "dmca: L must be >= 1");
  check<ConfigError>(cfg.groups >= 1 && cfg.channels % cfg.groups == 0, "dmca: channels ", cfg.channels,
                     " not divisible by G=", cfg.groups);
  check<ConfigError>(cfg.reducer_stride >= 1, "dmca: reducer stride must be >= 1");
}

std::size_t w5_in(const DmcaConfig& cfg) {
  switch (cfg.mode) {
    case DmcaMode::NoCgca: return 2;
    case DmcaMode::NoSkip: return 1;
    default: return 3;
  }
}

}  // namespace

DmcaParams DmcaParams::make(ParamFactory& f, std::string_view name, const DmcaConfig& cfg) {
  validate(cfg);
  const std::size_t c = cfg.channels, l = cfg.num_inputs, s = cfg.effective_stride();
  std::string n(name);
  DmcaParams p;
  p.cfg = cfg;
  switch (cfg.mode) {
    case DmcaMode::Concat:
      p.w1 = Linear::make_fan_in(f, n + ".w1", (l + 1) * c, 2 * c, cfg.bias);
      return p;
    case DmcaMode::NoCgca:
      p.w1 = Linear::make(f, n + ".w1", l * c, c, cfg.bias);
      p.w4 = Linear::make(f, n + ".w4", c, c, cfg.bias);
      p.w5 = Linear::make_fan_in(f, n + ".w5", 2 * c, 2 * c, cfg.bias);
      return p;
    default:
      break;
  }
  p.w1 = Linear::make(f, n + ".w1", l * c, 2 * c, cfg.bias);
  p.w2 = Linear::make(f, n + ".w2", c, c, cfg.bias);
  p.w3 = Linear::make(f, n + ".w3", c, c, cfg.bias);
  p.w4 = Linear::make(f, n + ".w4", c, c, cfg.bias);
  if (s > 1) {
    // Reducers start as exact average pools.
    double avg = 1.0 / static_cast<double>(s * s);
    p.r1 = f.make(n + ".r1", {c, s, s}, ParamFactory::Init::Constant, avg);
    p.r2 = f.make(n + ".r2", {c, s, s}, ParamFactory::Init::Constant, avg);
  }
  p.w5 = Linear::make_fan_in(f, n + ".w5", w5_in(cfg) * c, 2 * c, cfg.bias);
  return p;
}

void DmcaParams::visit(const std::string& prefix, const ParamVisitor& v) {
  w1.visit(prefix + ".w1", v);
  w2.visit(prefix + ".w2", v);
  w3.visit(prefix + ".w3", v);
  w4.visit(prefix + ".w4", v);
  visit_if(v, prefix + ".r1", r1);
  visit_if(v, prefix + ".r2", r2);
  w5.visit(prefix + ".w5", v);
}

Var cgca(const Var& q, const Var& k, const Var& v, Var* attn) {
  check(q.shape().size() == 3 && q.shape() == k.shape(), "cgca: q and k must share a (G,C/G,N/r) shape, got ",
        to_string(q.shape()), " and ", to_string(k.shape()));
  check(v.shape().size() == 3 && v.dim(0) == q.dim(0) && v.dim(1) == q.dim(1), "cgca: v must be (",
        q.dim(0), ",", q.dim(1), ",N), got ", to_string(v.shape()));
  double scale_n = static_cast<double>(q.dim(2));
  Var a = softmax_lastdim(scale(matmul(q, transpose_last2(k)), 1.0 / std::sqrt(scale_n)));
  if (attn) *attn = a;
  return reshape(matmul(a, v), {q.dim(0) * q.dim(1), v.dim(2)});
}

Var dmca_forward(Tape* tape, const Var& x, const std::vector<Var>& ys, const DmcaParams& p, DmcaTrace* trace) {
  return dmca_core(tape, x, x, ys, p, trace);
}

Var dmca_core(Tape* tape, const Var& x_query, const Var& x_skip, const std::vector<Var>& ys, const DmcaParams& p,
              DmcaTrace* trace) {
  const DmcaConfig& cfg = p.cfg;
  const std::size_t c = cfg.channels, g = cfg.groups;
  check(x_query.shape().size() == 3 && x_query.dim(0) == c, "dmca: x must be (", c, ",H,W), got ",
        to_string(x_query.shape()));
  check(x_skip.shape() == x_query.shape(), "dmca: skip input ", to_string(x_skip.shape()), " differs from query input ",
        to_string(x_query.shape()));
  check(ys.size() == cfg.num_inputs, "dmca: expected L=", cfg.num_inputs, " preceding features, got ", ys.size());
  for (const auto& y : ys)
    check(y.shape() == x_query.shape(), "dmca: preceding feature ", to_string(y.shape()), " differs from x ",
          to_string(x_query.shape()));
  const std::size_t h = x_query.dim(1), w = x_query.dim(2), n = h * w;

  Var out;
  if (cfg.mode == DmcaMode::Concat) {
    std::vector<Var> parts{x_skip};
    parts.insert(parts.end(), ys.begin(), ys.end());
    out = p.w1(tape, concat_channels(parts));
  } else if (cfg.mode == DmcaMode::NoCgca) {
    Var yv = p.w1(tape, ys.size() == 1 ? ys[0] : concat_channels(ys));
    out = p.w5(tape, concat_channels({x_skip, p.w4(tape, yv)}));
  } else {
    const std::size_t s = cfg.effective_stride();
    check(h % s == 0 && w % s == 0, "dmca: N=", n, " (", h, "x", w, ") not divisible by r=", s * s);
    auto [yk, yv] = [&] {
      auto parts = split_channels(p.w1(tape, ys.size() == 1 ? ys[0] : concat_channels(ys)), 2);
      return std::pair{parts[0], parts[1]};
    }();
    Var xr = s > 1 ? dwconv_stride(x_query, param(tape, p.r1), s) : x_query;
    Var kr = s > 1 ? dwconv_stride(yk, param(tape, p.r2), s) : yk;
    const std::size_t nr = n / (s * s);
    Var q = reshape(p.w2(tape, xr), {g, c / g, nr});
    Var k = reshape(p.w3(tape, kr), {g, c / g, nr});
    Var v = reshape(p.w4(tape, yv), {g, c / g, n});
    Var a;
    Var z = reshape(cgca(q, k, v, &a), {c, h, w});
    if (trace) {
      trace->q = q.shape();
      trace->k = k.shape();
      trace->v = v.shape();
      trace->attn = a.shape();
      trace->z = z.shape();
      trace->attn_map = a.value();
    }
    out = cfg.mode == DmcaMode::NoSkip ? p.w5(tape, z) : p.w5(tape, concat_channels({x_skip, yv, z}));
  }
  if (trace) trace->out = out.shape();
  return out;
}

std::size_t dmca_param_count(const DmcaConfig& cfg) {
  validate(cfg);
  const std::size_t c = cfg.channels, l = cfg.num_inputs, s = cfg.effective_stride();
  const std::size_t b = cfg.bias ? 1 : 0;
  auto lin = [b](std::size_t in, std::size_t out) { return in * out + b * out; };
  switch (cfg.mode) {
    case DmcaMode::Concat: return lin((l + 1) * c, 2 * c);
    case DmcaMode::NoCgca: return lin(l * c, c) + lin(c, c) + lin(2 * c, 2 * c);
    default: break;
  }
  std::size_t reducers = s > 1 ? 2 * s * s * c : 0;
  return lin(l * c, 2 * c) + 3 * lin(c, c) + reducers + lin(w5_in(cfg) * c, 2 * c);
}

std::uint64_t dmca_macs(const DmcaConfig& cfg, std::size_t h, std::size_t w) {
  const std::uint64_t c = cfg.channels, l = cfg.num_inputs, n = h * w;
  switch (cfg.mode) {
    case DmcaMode::Concat: return (l + 1) * c * 2 * c * n;
    case DmcaMode::NoCgca: return l * c * c * n + c * c * n + 2 * c * 2 * c * n;
    default: break;
  }
  const std::uint64_t s = cfg.effective_stride(), nr = n / (s * s), g = cfg.groups;
  std::uint64_t macs = l * c * 2 * c * n;
  if (s > 1) macs += 2 * c * n;            // reducers: s^2 taps per reduced token
  macs += 2 * c * c * nr + c * c * n;      // W2, W3, W4
  macs += c * c / g * nr + c * c / g * n;  // QK^T, AV
  macs += w5_in(cfg) * c * 2 * c * n;
  return macs;
}

std::size_t reducer_stride_for(std::size_t tokens, std::size_t target_tokens) {
  check<ConfigError>(target_tokens >= 1, "dmca: target token count must be >= 1");
  double s = std::round(std::sqrt(static_cast<double>(tokens) / static_cast<double>(target_tokens)));
  return std::max<std::size_t>(1, static_cast<std::size_t>(s));
}

}  // namespace sparx::dmca
