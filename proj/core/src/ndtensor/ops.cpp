// Copyright 2026 The sparx Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparx/ndtensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sparx/common/error.hpp"

namespace sparx {

std::uint64_t& mac_counter() {
  thread_local std::uint64_t count = 0;
  return count;
}

namespace {

DType promote(const std::vector<Var>& inputs) {
  for (const auto& v : inputs)
    if (v.defined() && v.dtype() == DType::F32) return DType::F32;
  return DType::F64;
}

Tape* tape_of(const std::vector<Var>& inputs) {
  for (const auto& v : inputs)
    if (v.defined() && v.tracked()) return v.tape();
  return nullptr;
}

/// Rounds, validates and (when any input is tracked) records an op result.
Var finish(std::string_view op, Tensor out, const std::vector<Var>& inputs, BackwardFn backward) {
  DType dt = promote(inputs);
  auto data = out.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i]))
      fail<NumericError>("non-finite value produced by op '", op, "' at element ", i, " of ", to_string(out.shape()));
  }
  if (dt != out.dtype()) out = out.to(dt);
  if (Tape* tape = tape_of(inputs)) return tape->record(op, std::move(out), inputs, std::move(backward));
  return Var::constant(std::move(out));
}

void require_same_shape(std::string_view op, const Var& a, const Var& b) {
  check(a.shape() == b.shape(), op, ": shape mismatch ", to_string(a.shape()), " vs ", to_string(b.shape()));
}

template <class F>
Var unary(std::string_view op, const Var& x, F&& fwd_and_deriv) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  auto deriv = std::make_shared<std::vector<double>>(in.numel());
  for (std::size_t i = 0; i < in.numel(); ++i) {
    auto [y, dy] = fwd_and_deriv(in[i]);
    out[i] = y;
    (*deriv)[i] = dy;
  }
  return finish(op, std::move(out), {x}, [deriv](const Tensor& g) {
    Tensor gx(g.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] = g[i] * (*deriv)[i];
    return std::vector<Tensor>{std::move(gx)};
  });
}

double sigmoid(double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); }

}  // namespace

// -- elementwise --------------------------------------------------------------

Var operator+(const Var& a, const Var& b) {
  require_same_shape("add", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  return finish("add", std::move(out), {a, b}, [](const Tensor& g) { return std::vector<Tensor>{g, g}; });
}

Var operator-(const Var& a, const Var& b) {
  require_same_shape("sub", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
  return finish("sub", std::move(out), {a, b}, [](const Tensor& g) {
    Tensor n(g.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) n[i] = -g[i];
    return std::vector<Tensor>{g, std::move(n)};
  });
}

Var operator*(const Var& a, const Var& b) {
  require_same_shape("mul", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  return finish("mul", std::move(out), {a, b}, [a, b](const Tensor& g) {
    Tensor ga(g.shape()), gb(g.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga[i] = g[i] * b.value()[i];
      gb[i] = g[i] * a.value()[i];
    }
    return std::vector<Tensor>{std::move(ga), std::move(gb)};
  });
}

Var scale(const Var& x, double factor) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x.value()[i] * factor;
  return finish("scale", std::move(out), {x}, [factor](const Tensor& g) {
    Tensor gx(g.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] = g[i] * factor;
    return std::vector<Tensor>{std::move(gx)};
  });
}

// -- dense --------------------------------------------------------------------

namespace {

// c[b] += a[b] * b[b] for row-major (M,K)x(K,N) blocks.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c += a^T * b with a (K,M), b (K,N).
void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t k, std::size_t m, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      double av = a[p * m + i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c += a * b^T with a (M,N), b (K,N): c (M,K).
void gemm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += arow[j] * brow[j];
      c[i * k + p] += s;
    }
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  bool batched = sa.size() == 3;
  check((sa.size() == 2 && sb.size() == 2) || (sa.size() == 3 && sb.size() == 3), "matmul: unsupported ranks ",
        to_string(sa), " x ", to_string(sb));
  std::size_t batch = batched ? sa[0] : 1;
  std::size_t m = sa[sa.size() - 2], k = sa.back();
  std::size_t k2 = sb[sb.size() - 2], n = sb.back();
  check(k == k2 && (!batched || sb[0] == batch), "matmul: inner dimensions differ ", to_string(sa), " x ",
        to_string(sb));
  Shape os = batched ? Shape{batch, m, n} : Shape{m, n};
  Tensor out(os);
  for (std::size_t bi = 0; bi < batch; ++bi)
    gemm_acc(a.value().data().data() + bi * m * k, b.value().data().data() + bi * k * n,
             out.data().data() + bi * m * n, m, k, n);
  mac_counter() += batch * m * k * n;
  return finish("matmul", std::move(out), {a, b}, [a, b, batch, m, k, n](const Tensor& g) {
    Tensor ga(a.shape()), gb(b.shape());
    for (std::size_t bi = 0; bi < batch; ++bi) {
      // dA = G B^T, dB = A^T G
      gemm_nt_acc(g.data().data() + bi * m * n, b.value().data().data() + bi * k * n, ga.data().data() + bi * m * k,
                  m, n, k);
      gemm_tn_acc(a.value().data().data() + bi * m * k, g.data().data() + bi * m * n, gb.data().data() + bi * k * n,
                  m, k, n);
    }
    return std::vector<Tensor>{std::move(ga), std::move(gb)};
  });
}

namespace {
Tensor transpose_tensor(const Tensor& t) {
  const auto& s = t.shape();
  std::size_t rows = s[s.size() - 2], cols = s.back();
  std::size_t batch = t.numel() / (rows * cols);
  Shape os = s;
  std::swap(os[os.size() - 2], os.back());
  Tensor out(os);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) out[b * rows * cols + j * rows + i] = t[b * rows * cols + i * cols + j];
  return out;
}
}  // namespace

Var transpose_last2(const Var& x) {
  check(x.shape().size() >= 2, "transpose_last2: rank must be >= 2, got ", to_string(x.shape()));
  return finish("transpose", transpose_tensor(x.value()), {x},
                [](const Tensor& g) { return std::vector<Tensor>{transpose_tensor(g)}; });
}

Var linear(const Var& x, const Var& w, const Var& bias) {
  check(w.shape().size() == 2 && !x.shape().empty(), "linear: weight must be 2-D, got ", to_string(w.shape()));
  std::size_t cout = w.dim(0), cin = w.dim(1);
  check(x.dim(0) == cin, "linear: input channels ", to_string(x.shape()), " do not match weight ",
        to_string(w.shape()));
  if (bias.defined())
    check(bias.shape() == Shape{cout}, "linear: bias ", to_string(bias.shape()), " does not match weight ",
          to_string(w.shape()));
  std::size_t n = x.numel() / cin;
  Shape os = x.shape();
  os[0] = cout;
  Tensor out(os);
  double* y = out.data().data();
  if (bias.defined())
    for (std::size_t o = 0; o < cout; ++o) std::fill(y + o * n, y + (o + 1) * n, bias.value()[o]);
  gemm_acc(w.value().data().data(), x.value().data().data(), y, cout, cin, n);
  mac_counter() += cout * cin * n;
  std::vector<Var> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  bool has_bias = bias.defined();
  return finish("linear", std::move(out), inputs, [x, w, cout, cin, n, has_bias](const Tensor& g) {
    Tensor gx(x.shape()), gw(w.shape());
    gemm_tn_acc(w.value().data().data(), g.data().data(), gx.data().data(), cout, cin, n);
    gemm_nt_acc(g.data().data(), x.value().data().data(), gw.data().data(), cout, n, cin);
    std::vector<Tensor> r{std::move(gx), std::move(gw)};
    if (has_bias) {
      Tensor gb(Shape{cout});
      for (std::size_t o = 0; o < cout; ++o) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += g[o * n + j];
        gb[o] = s;
      }
      r.push_back(std::move(gb));
    }
    return r;
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  check(!parts.empty(), "concat_channels: no inputs");
  Shape rest(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t channels = 0;
  for (const auto& p : parts) {
    Shape pr(p.shape().begin() + 1, p.shape().end());
    check(pr == rest, "concat_channels: shapes ", to_string(parts[0].shape()), " and ", to_string(p.shape()),
          " differ outside the channel axis");
    channels += p.dim(0);
  }
  Shape os = parts[0].shape();
  os[0] = channels;
  Tensor out(os);
  std::vector<std::size_t> sizes;
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
    sizes.push_back(p.numel());
    off += p.numel();
  }
  std::vector<Shape> shapes;
  for (const auto& p : parts) shapes.push_back(p.shape());
  return finish("concat_channels", std::move(out), parts, [sizes, shapes](const Tensor& g) {
    std::vector<Tensor> r;
    std::size_t o = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      Tensor gi(shapes[i]);
      std::copy(g.data().begin() + static_cast<std::ptrdiff_t>(o),
                g.data().begin() + static_cast<std::ptrdiff_t>(o + sizes[i]), gi.data().begin());
      o += sizes[i];
      r.push_back(std::move(gi));
    }
    return r;
  });
}

std::vector<Var> split_channels(const Var& x, std::size_t segments) {
  check(segments > 0 && !x.shape().empty() && x.dim(0) % segments == 0, "split_channels: ", to_string(x.shape()),
        " channel axis is not divisible into ", segments, " segments");
  Shape ps = x.shape();
  ps[0] /= segments;
  std::size_t chunk = x.numel() / segments;
  std::vector<Var> out;
  for (std::size_t s = 0; s < segments; ++s) {
    Tensor part(ps);
    auto begin = x.value().data().begin() + static_cast<std::ptrdiff_t>(s * chunk);
    std::copy(begin, begin + static_cast<std::ptrdiff_t>(chunk), part.data().begin());
    Shape full = x.shape();
    out.push_back(finish("split_channels", std::move(part), {x}, [s, chunk, full](const Tensor& g) {
      Tensor gx(full);
      std::copy(g.data().begin(), g.data().end(), gx.data().begin() + static_cast<std::ptrdiff_t>(s * chunk));
      return std::vector<Tensor>{std::move(gx)};
    }));
  }
  return out;
}

Var reshape(const Var& x, Shape shape) {
  check(numel_of(shape) == x.numel(), "reshape: cannot view ", to_string(x.shape()), " as ", to_string(shape));
  Shape from = x.shape();
  return finish("reshape", x.value().reshaped(std::move(shape)), {x},
                [from](const Tensor& g) { return std::vector<Tensor>{g.reshaped(from)}; });
}

Var gather(const Var& x, const GatherIndex& index, Shape out_shape) {
  check(index && index->size() == numel_of(out_shape), "gather: index length does not match output shape ",
        to_string(out_shape));
  const auto& idx = *index;
  Tensor out(out_shape);
  std::int64_t limit = static_cast<std::int64_t>(x.numel());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    check(idx[i] < limit, "gather: index ", idx[i], " out of range for ", to_string(x.shape()));
    out[i] = idx[i] < 0 ? 0.0 : x.value()[static_cast<std::size_t>(idx[i])];
  }
  Shape in_shape = x.shape();
  return finish("gather", std::move(out), {x}, [index, in_shape](const Tensor& g) {
    Tensor gx(in_shape);
    const auto& ix = *index;
    for (std::size_t i = 0; i < ix.size(); ++i)
      if (ix[i] >= 0) gx[static_cast<std::size_t>(ix[i])] += g[i];
    return std::vector<Tensor>{std::move(gx)};
  });
}

// -- convolution ---------------------------------------------------------------

namespace {

struct ConvGeom {
  std::size_t h, w, k, stride, pad, oh, ow;
};

ConvGeom conv_geometry(std::string_view op, const Shape& xs, std::size_t k, std::size_t stride, std::size_t pad) {
  check(xs.size() == 3, op, ": input must be (C,H,W), got ", to_string(xs));
  check(stride >= 1 && k >= 1, op, ": kernel and stride must be positive");
  std::size_t h = xs[1], w = xs[2];
  check(h + 2 * pad >= k && w + 2 * pad >= k, op, ": spatial dims ", to_string(xs), " smaller than kernel ", k);
  return {h, w, k, stride, pad, (h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1};
}

// Accumulates one (input-plane, kernel) correlation into an output plane, and
// its two adjoints. Planes are row-major; out-of-range taps read zero.
void plane_forward(const double* in, const double* ker, double* out, const ConvGeom& g) {
  for (std::size_t oy = 0; oy < g.oh; ++oy)
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
      if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
      const double* row = in + static_cast<std::size_t>(iy) * g.w;
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double kv = ker[ky * g.k + kx];
        if (kv == 0.0) continue;
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
          out[oy * g.ow + ox] += kv * row[ix];
        }
      }
    }
}

void plane_backward(const double* in, const double* ker, const double* gout, double* gin, double* gker,
                    const ConvGeom& g) {
  for (std::size_t oy = 0; oy < g.oh; ++oy)
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
      if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
      std::size_t rbase = static_cast<std::size_t>(iy) * g.w;
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double kv = ker[ky * g.k + kx];
        double acc = 0.0;
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
          double go = gout[oy * g.ow + ox];
          acc += go * in[rbase + static_cast<std::size_t>(ix)];
          gin[rbase + static_cast<std::size_t>(ix)] += go * kv;
        }
        gker[ky * g.k + kx] += acc;
      }
    }
}

}  // namespace

Var depthwise_conv2d(const Var& x, const Var& w, const Var& bias, std::size_t stride, std::size_t pad) {
  check(w.shape().size() == 3 && w.dim(1) == w.dim(2), "depthwise_conv2d: kernel must be (C,k,k), got ",
        to_string(w.shape()));
  ConvGeom g = conv_geometry("depthwise_conv2d", x.shape(), w.dim(1), stride, pad);
  std::size_t c = x.dim(0);
  check(w.dim(0) == c, "depthwise_conv2d: kernel ", to_string(w.shape()), " does not match input ",
        to_string(x.shape()));
  if (bias.defined()) check(bias.shape() == Shape{c}, "depthwise_conv2d: bias must be (C)");
  Tensor out(Shape{c, g.oh, g.ow});
  std::size_t in_plane = g.h * g.w, out_plane = g.oh * g.ow, kk = g.k * g.k;
  for (std::size_t ch = 0; ch < c; ++ch) {
    double* o = out.data().data() + ch * out_plane;
    if (bias.defined()) std::fill(o, o + out_plane, bias.value()[ch]);
    plane_forward(x.value().data().data() + ch * in_plane, w.value().data().data() + ch * kk, o, g);
  }
  mac_counter() += c * kk * out_plane;
  std::vector<Var> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  bool has_bias = bias.defined();
  return finish("depthwise_conv2d", std::move(out), inputs, [x, w, g, c, has_bias](const Tensor& go) {
    Tensor gx(x.shape()), gw(w.shape());
    std::size_t in_plane = g.h * g.w, out_plane = g.oh * g.ow, kk = g.k * g.k;
    for (std::size_t ch = 0; ch < c; ++ch)
      plane_backward(x.value().data().data() + ch * in_plane, w.value().data().data() + ch * kk,
                     go.data().data() + ch * out_plane, gx.data().data() + ch * in_plane,
                     gw.data().data() + ch * kk, g);
    std::vector<Tensor> r{std::move(gx), std::move(gw)};
    if (has_bias) {
      Tensor gb(Shape{c});
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < out_plane; ++i) gb[ch] += go[ch * out_plane + i];
      r.push_back(std::move(gb));
    }
    return r;
  });
}

Var conv2d(const Var& x, const Var& w, const Var& bias, std::size_t stride, std::size_t pad) {
  check(w.shape().size() == 4 && w.dim(2) == w.dim(3), "conv2d: kernel must be (Cout,Cin,k,k), got ",
        to_string(w.shape()));
  ConvGeom g = conv_geometry("conv2d", x.shape(), w.dim(2), stride, pad);
  std::size_t cout = w.dim(0), cin = w.dim(1);
  check(x.dim(0) == cin, "conv2d: kernel ", to_string(w.shape()), " does not match input ", to_string(x.shape()));
  if (bias.defined()) check(bias.shape() == Shape{cout}, "conv2d: bias must be (Cout)");
  Tensor out(Shape{cout, g.oh, g.ow});
  std::size_t in_plane = g.h * g.w, out_plane = g.oh * g.ow, kk = g.k * g.k;
  for (std::size_t co = 0; co < cout; ++co) {
    double* o = out.data().data() + co * out_plane;
    if (bias.defined()) std::fill(o, o + out_plane, bias.value()[co]);
    for (std::size_t ci = 0; ci < cin; ++ci)
      plane_forward(x.value().data().data() + ci * in_plane, w.value().data().data() + (co * cin + ci) * kk, o, g);
  }
  mac_counter() += cout * cin * kk * out_plane;
  std::vector<Var> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  bool has_bias = bias.defined();
  return finish("conv2d", std::move(out), inputs, [x, w, g, cin, cout, has_bias](const Tensor& go) {
    Tensor gx(x.shape()), gw(w.shape());
    std::size_t in_plane = g.h * g.w, out_plane = g.oh * g.ow, kk = g.k * g.k;
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t ci = 0; ci < cin; ++ci)
        plane_backward(x.value().data().data() + ci * in_plane, w.value().data().data() + (co * cin + ci) * kk,
                       go.data().data() + co * out_plane, gx.data().data() + ci * in_plane,
                       gw.data().data() + (co * cin + ci) * kk, g);
    std::vector<Tensor> r{std::move(gx), std::move(gw)};
    if (has_bias) {
      Tensor gb(Shape{cout});
      for (std::size_t co = 0; co < cout; ++co)
        for (std::size_t i = 0; i < out_plane; ++i) gb[co] += go[co * out_plane + i];
      r.push_back(std::move(gb));
    }
    return r;
  });
}

Var dwconv_stride(const Var& x, const Var& w, std::size_t stride) {
  check(x.shape().size() == 3 && x.dim(1) % stride == 0 && x.dim(2) % stride == 0, "dwconv_stride: stride ", stride,
        " does not divide spatial dims of ", to_string(x.shape()));
  check(w.shape().size() == 3 && w.dim(1) == stride, "dwconv_stride: kernel ", to_string(w.shape()),
        " must be (C,", stride, ",", stride, ")");
  return depthwise_conv2d(x, w, Var{}, stride, 0);
}

Var avg_pool2d(const Var& x, std::size_t stride) {
  check(x.shape().size() == 3 && stride >= 1 && x.dim(1) % stride == 0 && x.dim(2) % stride == 0,
        "avg_pool2d: stride ", stride, " does not divide spatial dims of ", to_string(x.shape()));
  std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), oh = h / stride, ow = w / stride;
  double inv = 1.0 / static_cast<double>(stride * stride);
  Tensor out(Shape{c, oh, ow});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx)
        out[(ch * oh + y / stride) * ow + xx / stride] += x.value()[(ch * h + y) * w + xx] * inv;
  return finish("avg_pool2d", std::move(out), {x}, [c, h, w, oh, ow, stride, inv](const Tensor& g) {
    Tensor gx(Shape{c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx)
          gx[(ch * h + y) * w + xx] = g[(ch * oh + y / stride) * ow + xx / stride] * inv;
    return std::vector<Tensor>{std::move(gx)};
  });
}

// -- nonlinear -----------------------------------------------------------------

Var softmax_lastdim(const Var& x) {
  check(!x.shape().empty() && x.shape().back() >= 1, "softmax_lastdim: empty reduction axis in ",
        to_string(x.shape()));
  std::size_t n = x.shape().back(), rows = x.numel() / n;
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.value().data().data() + r * n;
    double* o = out.data().data() + r * n;
    double mx = *std::max_element(in, in + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < n; ++j) o[j] /= s;
  }
  auto y = std::make_shared<Tensor>(out);
  return finish("softmax", std::move(out), {x}, [y, n, rows](const Tensor& g) {
    Tensor gx(g.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * (*y)[r * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[r * n + j] = (*y)[r * n + j] * (g[r * n + j] - dot);
    }
    return std::vector<Tensor>{std::move(gx)};
  });
}

Var layernorm_channels(const Var& x, const Var& gamma, const Var& beta, double eps) {
  check(!x.shape().empty() && x.dim(0) >= 1, "layernorm_channels: empty channel axis");
  std::size_t c = x.dim(0), n = x.numel() / c;
  if (gamma.defined()) check(gamma.shape() == Shape{c}, "layernorm_channels: gamma must be (", c, ")");
  if (beta.defined()) check(beta.shape() == Shape{c}, "layernorm_channels: beta must be (", c, ")");
  auto xhat = std::make_shared<Tensor>(x.shape());
  auto rstd = std::make_shared<std::vector<double>>(n);
  std::vector<double> mean(n, 0.0), var(n, 0.0);
  const auto& xv = x.value();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t j = 0; j < n; ++j) mean[j] += xv[ch * n + j];
  for (auto& m : mean) m /= static_cast<double>(c);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t j = 0; j < n; ++j) {
      double d = xv[ch * n + j] - mean[j];
      var[j] += d * d;
    }
  for (std::size_t j = 0; j < n; ++j) (*rstd)[j] = 1.0 / std::sqrt(var[j] / static_cast<double>(c) + eps);
  Tensor out(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    double gm = gamma.defined() ? gamma.value()[ch] : 1.0;
    double bt = beta.defined() ? beta.value()[ch] : 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double h = (xv[ch * n + j] - mean[j]) * (*rstd)[j];
      (*xhat)[ch * n + j] = h;
      out[ch * n + j] = gm * h + bt;
    }
  }
  std::vector<Var> inputs{x};
  if (gamma.defined()) inputs.push_back(gamma);
  if (beta.defined()) inputs.push_back(beta);
  bool has_g = gamma.defined(), has_b = beta.defined();
  return finish("layernorm", std::move(out), inputs, [xhat, rstd, gamma, c, n, has_g, has_b](const Tensor& g) {
    Tensor gx(xhat->shape());
    std::vector<double> s1(n, 0.0), s2(n, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double gm = has_g ? gamma.value()[ch] : 1.0;
      for (std::size_t j = 0; j < n; ++j) {
        double dh = g[ch * n + j] * gm;
        s1[j] += dh;
        s2[j] += dh * (*xhat)[ch * n + j];
      }
    }
    double inv_c = 1.0 / static_cast<double>(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double gm = has_g ? gamma.value()[ch] : 1.0;
      for (std::size_t j = 0; j < n; ++j) {
        double dh = g[ch * n + j] * gm;
        gx[ch * n + j] = (*rstd)[j] * (dh - inv_c * s1[j] - (*xhat)[ch * n + j] * inv_c * s2[j]);
      }
    }
    std::vector<Tensor> r{std::move(gx)};
    if (has_g) {
      Tensor gg(Shape{c});
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t j = 0; j < n; ++j) gg[ch] += g[ch * n + j] * (*xhat)[ch * n + j];
      r.push_back(std::move(gg));
    }
    if (has_b) {
      Tensor gb(Shape{c});
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t j = 0; j < n; ++j) gb[ch] += g[ch * n + j];
      r.push_back(std::move(gb));
    }
    return r;
  });
}

Var silu(const Var& x) {
  return unary("silu", x, [](double v) {
    double s = sigmoid(v);
    return std::pair{v * s, s * (1.0 + v * (1.0 - s))};
  });
}

Var gelu(const Var& x) {
  return unary("gelu", x, [](double v) {
    double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 * 0.5));
    double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
    return std::pair{v * cdf, cdf + v * pdf};
  });
}

Var softplus(const Var& x) {
  return unary("softplus", x, [](double v) {
    double y = v > 30.0 ? v : std::log1p(std::exp(v));
    return std::pair{y, sigmoid(v)};
  });
}

Var exp(const Var& x) {
  return unary("exp", x, [](double v) {
    double e = std::exp(v);
    return std::pair{e, e};
  });
}

// -- reductions ----------------------------------------------------------------

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  Shape in = x.shape();
  return finish("sum", Tensor::scalar(s), {x},
                [in](const Tensor& g) { return std::vector<Tensor>{Tensor::full(in, g.item())}; });
}

Var mean_tokens(const Var& x) {
  check(!x.shape().empty(), "mean_tokens: needs rank >= 1");
  std::size_t c = x.dim(0), n = x.numel() / c;
  Tensor out(Shape{c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += x.value()[ch * n + j];
    out[ch] = s / static_cast<double>(n);
  }
  Shape in = x.shape();
  return finish("mean_tokens", std::move(out), {x}, [in, c, n](const Tensor& g) {
    Tensor gx(in);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t j = 0; j < n; ++j) gx[ch * n + j] = g[ch] / static_cast<double>(n);
    return std::vector<Tensor>{std::move(gx)};
  });
}

Var cross_entropy(const Var& logits, std::size_t label) {
  check(logits.shape().size() == 1 && label < logits.dim(0), "cross_entropy: label ", label,
        " out of range for logits ", to_string(logits.shape()));
  std::size_t k = logits.dim(0);
  const auto& z = logits.value();
  double mx = *std::max_element(z.data().begin(), z.data().end());
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += std::exp(z[i] - mx);
  double lse = mx + std::log(s);
  auto probs = std::make_shared<std::vector<double>>(k);
  for (std::size_t i = 0; i < k; ++i) (*probs)[i] = std::exp(z[i] - lse);
  return finish("cross_entropy", Tensor::scalar(lse - z[label]), {logits}, [probs, k, label](const Tensor& g) {
    Tensor gz(Shape{k});
    for (std::size_t i = 0; i < k; ++i) gz[i] = g.item() * ((*probs)[i] - (i == label ? 1.0 : 0.0));
    return std::vector<Tensor>{std::move(gz)};
  });
}

// -- state-space scan -------------------------------------------------------------

Var selective_scan(const Var& x, const Var& delta, const Var& a, const Var& b, const Var& c, const Var& d) {
  check(x.shape().size() == 2, "selective_scan: sequence must be (C,T), got ", to_string(x.shape()));
  std::size_t ch = x.dim(0), t_len = x.dim(1);
  check(a.shape().size() == 2 && a.dim(0) == ch, "selective_scan: A must be (C,S), got ", to_string(a.shape()));
  std::size_t ns = a.dim(1);
  require_same_shape("selective_scan(delta)", x, delta);
  check(b.shape() == Shape{ns, t_len} && c.shape() == Shape{ns, t_len}, "selective_scan: B/C must be (",
        ns, ",", t_len, "), got ", to_string(b.shape()), " and ", to_string(c.shape()));
  check(d.shape() == Shape{ch}, "selective_scan: D must be (", ch, "), got ", to_string(d.shape()));

  const auto& xv = x.value();
  const auto& dv = delta.value();
  const auto& av = a.value();
  const auto& bv = b.value();
  const auto& cv = c.value();
  const auto& skip = d.value();

  // States for every (channel, step, state) are kept for the backward pass.
  auto hs = std::make_shared<std::vector<double>>(ch * t_len * ns);
  Tensor out(Shape{ch, t_len});
  for (std::size_t k = 0; k < ch; ++k) {
    for (std::size_t t = 0; t < t_len; ++t) {
      double dt = dv[k * t_len + t];
      if (!(dt > 0.0)) fail<NumericError>("selective_scan: non-positive step size ", dt);
      double xt = xv[k * t_len + t];
      double y = skip[k] * xt;
      for (std::size_t n = 0; n < ns; ++n) {
        double prev = t ? (*hs)[(k * t_len + t - 1) * ns + n] : 0.0;
        double h = std::exp(dt * av[k * ns + n]) * prev + dt * bv[n * t_len + t] * xt;
        (*hs)[(k * t_len + t) * ns + n] = h;
        y += cv[n * t_len + t] * h;
      }
      out[k * t_len + t] = y;
    }
  }
  mac_counter() += kScanMacsPerStep * ch * ns * t_len;

  return finish("selective_scan", std::move(out), {x, delta, a, b, c, d},
                [x, delta, a, b, c, d, hs, ch, t_len, ns](const Tensor& gy) {
                  const auto& xv = x.value();
                  const auto& dv = delta.value();
                  const auto& av = a.value();
                  const auto& bv = b.value();
                  const auto& cv = c.value();
                  Tensor gx(x.shape()), gdelta(delta.shape()), ga(a.shape()), gb(b.shape()), gc(c.shape()),
                      gd(d.shape());
                  std::vector<double> gh(ns);
                  for (std::size_t k = 0; k < ch; ++k) {
                    std::fill(gh.begin(), gh.end(), 0.0);
                    for (std::size_t tt = t_len; tt-- > 0;) {
                      std::size_t i = k * t_len + tt;
                      double dt = dv[i], xt = xv[i], g = gy[i];
                      gd[k] += g * xt;
                      gx[i] += g * d.value()[k];
                      for (std::size_t n = 0; n < ns; ++n) {
                        double h = (*hs)[i * ns + n];
                        double prev = tt ? (*hs)[(i - 1) * ns + n] : 0.0;
                        gc[n * t_len + tt] += g * h;
                        double ghn = gh[n] + g * cv[n * t_len + tt];
                        double decay = std::exp(dt * av[k * ns + n]);
                        // h = decay * prev + dt * B * x
                        double gdecay = ghn * prev;
                        gdelta[i] += gdecay * decay * av[k * ns + n] + ghn * bv[n * t_len + tt] * xt;
                        ga[k * ns + n] += gdecay * decay * dt;
                        gb[n * t_len + tt] += ghn * dt * xt;
                        gx[i] += ghn * dt * bv[n * t_len + tt];
                        gh[n] = ghn * decay;
                      }
                    }
                  }
                  return std::vector<Tensor>{std::move(gx), std::move(gdelta), std::move(ga),
                                             std::move(gb), std::move(gc), std::move(gd)};
                });
}

}  // namespace sparx
