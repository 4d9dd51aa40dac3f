// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparx/blocks/blocks.hpp"

#include <algorithm>
#include <cmath>

#include "sparx/common/error.hpp"

namespace sparx::blocks {

using sparx::to_string;

const char* to_string(MixerKind kind) {
  switch (kind) {
    case MixerKind::Ss2d: return "ss2d";
    case MixerKind::Ssm: return "ssm";
    case MixerKind::Bissm: return "bissm";
    case MixerKind::WindowAttn: return "window_attn";
  }
  return "?";
}

MixerKind parse_mixer(std::string_view name) {
  if (name == "ss2d") return MixerKind::Ss2d;
  if (name == "ssm") return MixerKind::Ssm;
  if (name == "bissm") return MixerKind::Bissm;
  if (name == "window_attn") return MixerKind::WindowAttn;
  fail<ConfigError>("unknown mixer '", name, "' (expected ss2d|ssm|bissm|window_attn)");
}

namespace {

GatherIndex make_index(std::vector<std::int64_t> v) {
  return std::make_shared<const std::vector<std::int64_t>>(std::move(v));
}

void check_map(const Var& x, const char* op) {
  check(x.shape().size() == 3, op, ": expected a (C,H,W) map, got ", to_string(x.shape()));
}

}  // namespace

// -- DPE ------------------------------------------------------------------------

Dpe Dpe::make(ParamFactory& f, std::string_view name, std::size_t channels) {
  return Dpe{f.weight(std::string(name) + ".kernel", {channels, 3, 3})};
}

Var Dpe::operator()(Tape* tape, const Var& x) const {
  check_map(x, "dpe");
  check(x.dim(0) == kernel.dim(0), "dpe: input has ", x.dim(0), " channels but kernel has ", kernel.dim(0));
  return x + dwconv3x3_pad1(x, param(tape, kernel));
}

void Dpe::visit(const std::string& prefix, const ParamVisitor& v) { visit_if(v, prefix + ".kernel", kernel); }

// -- SSM ------------------------------------------------------------------------

std::size_t default_delta_rank(std::size_t channels) { return (channels + 7) / 8; }

SsmParams SsmParams::make(ParamFactory& f, std::string_view name, std::size_t channels, std::size_t state_dim,
                          std::size_t delta_rank) {
  check<ConfigError>(state_dim >= 1, "ssm: state_dim must be >= 1");
  std::size_t r = delta_rank ? delta_rank : default_delta_rank(channels);
  std::string n(name);
  SsmParams p;
  p.a_log = f.custom(n + ".a_log", {channels, state_dim},
                     [state_dim](Rng&, std::size_t i) { return std::log(static_cast<double>(i % state_dim + 1)); });
  p.d_skip = f.ones(n + ".d_skip", {channels});
  p.delta_down = f.weight(n + ".delta_down", {r, channels});
  p.delta_up = f.weight(n + ".delta_up", {channels, r});
  // Step sizes log-uniform in [1e-3, 1e-1] through the inverse softplus.
  p.delta_bias = f.custom(n + ".delta_bias", {channels}, [](Rng& rng, std::size_t) {
    double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    return dt + std::log(-std::expm1(-dt));
  });
  p.proj_b = f.weight(n + ".proj_b", {state_dim, channels});
  p.proj_c = f.weight(n + ".proj_c", {state_dim, channels});
  return p;
}

void SsmParams::visit(const std::string& prefix, const ParamVisitor& v) {
  visit_if(v, prefix + ".a_log", a_log);
  visit_if(v, prefix + ".d_skip", d_skip);
  visit_if(v, prefix + ".delta_down", delta_down);
  visit_if(v, prefix + ".delta_up", delta_up);
  visit_if(v, prefix + ".delta_bias", delta_bias);
  visit_if(v, prefix + ".proj_b", proj_b);
  visit_if(v, prefix + ".proj_c", proj_c);
}

Var selective_scan_1d(Tape* tape, const Var& seq, const SsmParams& p) {
  check(seq.shape().size() == 2, "selective_scan_1d: expected (C,T), got ", to_string(seq.shape()));
  check(seq.dim(0) == p.channels(), "selective_scan_1d: sequence has ", seq.dim(0), " channels, params expect ",
        p.channels());
  Var low = linear(seq, param(tape, p.delta_down));
  Var delta = softplus(linear(low, param(tape, p.delta_up), param(tape, p.delta_bias)));
  Var b = linear(seq, param(tape, p.proj_b));
  Var c = linear(seq, param(tape, p.proj_c));
  Var a = scale(exp(param(tape, p.a_log)), -1.0);
  return selective_scan(seq, delta, a, b, c, param(tape, p.d_skip));
}

std::vector<std::size_t> scan_positions(ScanOrder order, std::size_t h, std::size_t w) {
  std::size_t n = h * w;
  std::vector<std::size_t> pos(n);
  for (std::size_t t = 0; t < n; ++t) {
    switch (order) {
      case ScanOrder::RowForward: pos[t] = t; break;
      case ScanOrder::RowReverse: pos[t] = n - 1 - t; break;
      case ScanOrder::ColForward: pos[t] = (t % h) * w + t / h; break;
      case ScanOrder::ColReverse: {
        std::size_t u = n - 1 - t;
        pos[t] = (u % h) * w + u / h;
        break;
      }
    }
  }
  return pos;
}

Var to_sequence(const Var& x, ScanOrder order) {
  check_map(x, "to_sequence");
  std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), n = h * w;
  auto pos = scan_positions(order, h, w);
  std::vector<std::int64_t> idx(c * n);
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t t = 0; t < n; ++t) idx[k * n + t] = static_cast<std::int64_t>(k * n + pos[t]);
  return gather(x, make_index(std::move(idx)), {c, n});
}

Var from_sequence(const Var& seq, ScanOrder order, std::size_t h, std::size_t w) {
  std::size_t c = seq.dim(0), n = h * w;
  check(seq.shape() == Shape{c, n}, "from_sequence: expected (C,", n, "), got ", to_string(seq.shape()));
  auto pos = scan_positions(order, h, w);
  std::vector<std::int64_t> idx(c * n);
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t t = 0; t < n; ++t) idx[k * n + pos[t]] = static_cast<std::int64_t>(k * n + t);
  return gather(seq, make_index(std::move(idx)), {c, h, w});
}

namespace {

Var directional_scan(Tape* tape, const Var& x, ScanOrder order, const SsmParams& p) {
  return from_sequence(selective_scan_1d(tape, to_sequence(x, order), p), order, x.dim(1), x.dim(2));
}

}  // namespace

Var ss2d_forward(Tape* tape, const Var& x, std::span<const SsmParams> dirs) {
  check_map(x, "ss2d");
  check(dirs.size() == 4, "ss2d: expected 4 direction parameter sets, got ", dirs.size());
  Var d1 = directional_scan(tape, x, ScanOrder::RowForward, dirs[0]);
  Var d2 = directional_scan(tape, x, ScanOrder::RowReverse, dirs[1]);
  Var d3 = directional_scan(tape, x, ScanOrder::ColForward, dirs[2]);
  Var d4 = directional_scan(tape, x, ScanOrder::ColReverse, dirs[3]);
  return (d1 + d2) + (d3 + d4);
}

Var bissm_forward(Tape* tape, const Var& x, const SsmParams& fwd, const SsmParams& bwd) {
  check_map(x, "bissm");
  return directional_scan(tape, x, ScanOrder::RowForward, fwd) + directional_scan(tape, x, ScanOrder::RowReverse, bwd);
}

Var ssm_forward(Tape* tape, const Var& x, const SsmParams& p) {
  check_map(x, "ssm");
  return directional_scan(tape, x, ScanOrder::RowForward, p);
}

// -- window attention -----------------------------------------------------------------

WindowAttention WindowAttention::make(ParamFactory& f, std::string_view name, std::size_t channels,
                                      std::size_t window, std::size_t head_dim) {
  check<ConfigError>(window >= 1, "window_attn: window must be >= 1");
  check<ConfigError>(head_dim >= 1 && channels % head_dim == 0, "window_attn: channels ", channels,
                     " not divisible by head_dim ", head_dim);
  std::string n(name);
  WindowAttention a;
  a.window = window;
  a.heads = channels / head_dim;
  a.qkv = Linear::make(f, n + ".qkv", channels, 3 * channels);
  a.proj = Linear::make(f, n + ".proj", channels, channels);
  a.rel_bias = f.zeros(n + ".rel_bias", {(2 * window - 1) * (2 * window - 1), a.heads});
  return a;
}

std::pair<std::size_t, std::size_t> WindowAttention::geometry(std::size_t window, bool shifted, std::size_t h,
                                                              std::size_t w) {
  std::size_t m = std::min(h, w);
  if (m <= window) return {m, 0};
  return {window, shifted ? window / 2 : 0};
}

Var WindowAttention::operator()(Tape* tape, const Var& x, bool shifted) const {
  check_map(x, "window_attn");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  check(c % heads == 0, "window_attn: channels ", c, " not divisible by ", heads, " heads");
  const std::size_t hd = c / heads;
  auto [ws, shift] = geometry(window, shifted, h, w);
  const std::size_t hp = (h + ws - 1) / ws * ws, wp = (w + ws - 1) / ws * ws;
  const std::size_t nwh = hp / ws, nww = wp / ws, nw = nwh * nww, tt = ws * ws, plane = hp * wp;
  const std::size_t nb = heads * nw;

  // Pad, then cyclic shift by -shift.
  std::vector<std::int64_t> pad_idx(c * plane);
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < hp; ++i)
      for (std::size_t j = 0; j < wp; ++j) {
        std::size_t si = (i + shift) % hp, sj = (j + shift) % wp;
        pad_idx[(k * hp + i) * wp + j] = (si < h && sj < w) ? static_cast<std::int64_t>((k * h + si) * w + sj) : -1;
      }
  Var xp = gather(x, make_index(std::move(pad_idx)), {c, hp, wp});
  Var qkv_map = qkv(tape, xp);

  auto pixel = [&](std::size_t win, std::size_t t) {
    std::size_t wy = win / nww, wx = win % nww;
    return (wy * ws + t / ws) * wp + wx * ws + t % ws;
  };
  auto part_index = [&](std::size_t offset, bool transposed) {
    std::vector<std::int64_t> idx(nb * tt * hd);
    for (std::size_t hh = 0; hh < heads; ++hh)
      for (std::size_t win = 0; win < nw; ++win)
        for (std::size_t t = 0; t < tt; ++t)
          for (std::size_t d = 0; d < hd; ++d) {
            std::size_t b = hh * nw + win;
            std::size_t dst = transposed ? (b * hd + d) * tt + t : (b * tt + t) * hd + d;
            idx[dst] = static_cast<std::int64_t>((offset + hh * hd + d) * plane + pixel(win, t));
          }
    return make_index(std::move(idx));
  };
  Var q = gather(qkv_map, part_index(0, false), {nb, tt, hd});
  Var kt = gather(qkv_map, part_index(c, true), {nb, hd, tt});
  Var v = gather(qkv_map, part_index(2 * c, false), {nb, tt, hd});

  Var logits = matmul(scale(q, 1.0 / std::sqrt(static_cast<double>(hd))), kt);

  const std::size_t span = 2 * window - 1;
  std::vector<std::int64_t> bias_idx(nb * tt * tt);
  for (std::size_t hh = 0; hh < heads; ++hh)
    for (std::size_t win = 0; win < nw; ++win)
      for (std::size_t t1 = 0; t1 < tt; ++t1)
        for (std::size_t t2 = 0; t2 < tt; ++t2) {
          std::size_t dy = t1 / ws + window - 1 - t2 / ws, dx = t1 % ws + window - 1 - t2 % ws;
          bias_idx[((hh * nw + win) * tt + t1) * tt + t2] = static_cast<std::int64_t>((dy * span + dx) * heads + hh);
        }
  logits = logits + gather(param(tape, rel_bias), make_index(std::move(bias_idx)), {nb, tt, tt});

  if (shift > 0) {
    auto region = [&](std::size_t i, std::size_t n) -> std::size_t { return i < n - ws ? 0 : (i < n - shift ? 1 : 2); };
    Tensor mask({nb, tt, tt}, x.dtype());
    for (std::size_t win = 0; win < nw; ++win) {
      std::vector<std::size_t> label(tt);
      for (std::size_t t = 0; t < tt; ++t) {
        std::size_t p = pixel(win, t);
        label[t] = region(p / wp, hp) * 3 + region(p % wp, wp);
      }
      for (std::size_t hh = 0; hh < heads; ++hh)
        for (std::size_t t1 = 0; t1 < tt; ++t1)
          for (std::size_t t2 = 0; t2 < tt; ++t2)
            if (label[t1] != label[t2]) mask[((hh * nw + win) * tt + t1) * tt + t2] = kShiftMask;
    }
    logits = logits + Var::constant(std::move(mask));
  }

  Var out = matmul(softmax_lastdim(logits), v);  // (nb, tt, hd)

  // Merge windows and heads, undo the shift, crop.
  std::vector<std::int64_t> merge_idx(c * h * w);
  for (std::size_t hh = 0; hh < heads; ++hh)
    for (std::size_t d = 0; d < hd; ++d)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          std::size_t pi = (i + hp - shift) % hp, pj = (j + wp - shift) % wp;
          std::size_t win = (pi / ws) * nww + pj / ws, t = (pi % ws) * ws + pj % ws;
          merge_idx[((hh * hd + d) * h + i) * w + j] = static_cast<std::int64_t>(((hh * nw + win) * tt + t) * hd + d);
        }
  return proj(tape, gather(out, make_index(std::move(merge_idx)), {c, h, w}));
}

void WindowAttention::visit(const std::string& prefix, const ParamVisitor& v) {
  qkv.visit(prefix + ".qkv", v);
  proj.visit(prefix + ".proj", v);
  visit_if(v, prefix + ".rel_bias", rel_bias);
}

// -- ConvFFN --------------------------------------------------------------------------------

ConvFfn ConvFfn::make(ParamFactory& f, std::string_view name, std::size_t channels, std::size_t ratio) {
  std::string n(name);
  ConvFfn m;
  m.fc1 = Linear::make(f, n + ".fc1", channels, ratio * channels);
  m.dw_kernel = f.weight(n + ".dw_kernel", {ratio * channels, 3, 3});
  m.dw_bias = f.zeros(n + ".dw_bias", {ratio * channels});
  m.fc2 = Linear::make(f, n + ".fc2", ratio * channels, channels);
  return m;
}

Var ConvFfn::operator()(Tape* tape, const Var& x) const {
  check_map(x, "convffn");
  Var hidden = fc1(tape, x);
  hidden = gelu(dwconv3x3_pad1(hidden, param(tape, dw_kernel), param(tape, dw_bias)));
  return fc2(tape, hidden);
}

void ConvFfn::visit(const std::string& prefix, const ParamVisitor& v) {
  fc1.visit(prefix + ".fc1", v);
  visit_if(v, prefix + ".dw_kernel", dw_kernel);
  visit_if(v, prefix + ".dw_bias", dw_bias);
  fc2.visit(prefix + ".fc2", v);
}

// -- mixer and VSS block -------------------------------------------------------------------------

Mixer Mixer::make(ParamFactory& f, std::string_view name, MixerKind kind, std::size_t channels,
                  const MixerOptions& opts) {
  std::string n(name);
  Mixer m;
  m.kind = kind;
  m.shifted = opts.shifted;
  std::size_t ndirs = kind == MixerKind::Ss2d ? 4 : kind == MixerKind::Bissm ? 2 : kind == MixerKind::Ssm ? 1 : 0;
  for (std::size_t d = 0; d < ndirs; ++d)
    m.dirs.push_back(SsmParams::make(f, n + ".dir" + std::to_string(d), channels, opts.state_dim, opts.delta_rank));
  if (kind == MixerKind::WindowAttn) m.attn = WindowAttention::make(f, n + ".attn", channels, opts.window, opts.head_dim);
  return m;
}

Var Mixer::operator()(Tape* tape, const Var& x) const {
  switch (kind) {
    case MixerKind::Ss2d: return ss2d_forward(tape, x, dirs);
    case MixerKind::Bissm: return bissm_forward(tape, x, dirs[0], dirs[1]);
    case MixerKind::Ssm: return ssm_forward(tape, x, dirs[0]);
    case MixerKind::WindowAttn: return attn(tape, x, shifted);
  }
  fail<ConfigError>("unknown mixer");
}

void Mixer::visit(const std::string& prefix, const ParamVisitor& v) {
  for (std::size_t d = 0; d < dirs.size(); ++d) dirs[d].visit(prefix + ".dir" + std::to_string(d), v);
  if (kind == MixerKind::WindowAttn) attn.visit(prefix + ".attn", v);
}

VssBlock VssBlock::make(ParamFactory& f, std::string_view name, MixerKind kind, std::size_t channels,
                        const MixerOptions& opts) {
  std::string n(name);
  VssBlock b;
  b.norm1 = LayerNorm::make(f, n + ".norm1", channels);
  b.mixer = Mixer::make(f, n + ".mixer", kind, channels, opts);
  b.norm2 = LayerNorm::make(f, n + ".norm2", channels);
  b.ffn = ConvFfn::make(f, n + ".ffn", channels);
  return b;
}

Var VssBlock::operator()(Tape* tape, const Var& x, Var* mixer_out) const {
  Var m = mixer(tape, norm1(tape, x));
  if (mixer_out) *mixer_out = m;
  Var x1 = x + m;
  return x1 + ffn(tape, norm2(tape, x1));
}

void VssBlock::visit(const std::string& prefix, const ParamVisitor& v) {
  norm1.visit(prefix + ".norm1", v);
  mixer.visit(prefix + ".mixer", v);
  norm2.visit(prefix + ".norm2", v);
  ffn.visit(prefix + ".ffn", v);
}

// -- analytic MACs -------------------------------------------------------------------------------

std::uint64_t ssm_macs(std::size_t channels, std::size_t tokens, std::size_t state_dim, std::size_t delta_rank) {
  std::uint64_t c = channels, n = tokens, s = state_dim, r = delta_rank ? delta_rank : default_delta_rank(channels);
  return 2 * r * c * n + 2 * s * c * n + kScanMacsPerStep * c * s * n;
}

std::uint64_t mixer_macs(MixerKind kind, std::size_t channels, std::size_t h, std::size_t w,
                         const MixerOptions& opts) {
  std::size_t n = h * w;
  switch (kind) {
    case MixerKind::Ss2d: return 4 * ssm_macs(channels, n, opts.state_dim, opts.delta_rank);
    case MixerKind::Bissm: return 2 * ssm_macs(channels, n, opts.state_dim, opts.delta_rank);
    case MixerKind::Ssm: return ssm_macs(channels, n, opts.state_dim, opts.delta_rank);
    case MixerKind::WindowAttn: {
      auto [ws, shift] = WindowAttention::geometry(opts.window, opts.shifted, h, w);
      (void)shift;
      std::uint64_t np = static_cast<std::uint64_t>((h + ws - 1) / ws * ws) * ((w + ws - 1) / ws * ws);
      std::uint64_t c = channels;
      return 3 * c * c * np + 2 * np * ws * ws * c + c * c * n;
    }
  }
  return 0;
}

std::uint64_t convffn_macs(std::size_t channels, std::size_t tokens, std::size_t ratio) {
  std::uint64_t c = channels, n = tokens, hid = ratio * channels;
  return 2 * c * hid * n + 9 * hid * n;
}

std::uint64_t vss_macs(MixerKind kind, std::size_t channels, std::size_t h, std::size_t w,
                       const MixerOptions& opts) {
  return mixer_macs(kind, channels, h, w, opts) + convffn_macs(channels, h * w);
}

}  // namespace sparx::blocks
