// SPDX-License-Identifier: Apache-2.0
#include <memory>

#include "octsr/dense.hpp"
#include "octsr/error.hpp"

namespace octsr {

namespace {

inline void axpy(double a, const double* w, double* y, std::int64_t n) {
  for (std::int64_t k = 0; k < n; ++k) y[k] += a * w[k];
}

}  // namespace

std::int64_t conv_out_extent(std::int64_t in, const Conv2dSpec& s) {
  const std::int64_t span = in + 2 * s.padding - s.kernel;
  if (s.stride < 1 || span < 0)
    throw ShapeError("convolution with kernel " + std::to_string(s.kernel) + " does not fit input extent " +
                     std::to_string(in));
  return span / s.stride + 1;
}

Var conv2d(Tape& t, Var x, Var w, Var bias, const Conv2dSpec& spec) {
  const auto& xs = t.shape(x);
  if (xs.size() != 4) throw ShapeError("conv2d expects [M, H, W, C] input, got " + shape_string(xs));
  const std::int64_t m = xs[0], h = xs[1], wd = xs[2], cin = xs[3];
  const int k = spec.kernel;
  const auto& ws = t.shape(w);
  if (ws.size() != 3 || ws[0] != k * k || ws[1] != cin)
    throw ShapeError("conv2d weight " + shape_string(ws) + " does not match kernel " + std::to_string(k) +
                     " and " + std::to_string(cin) + " input channels");
  const std::int64_t cout = ws[2];
  if (bias.valid() && t.shape(bias) != Shape{cout}) throw ShapeError("conv2d bias must be [Cout]");
  const std::int64_t ho = conv_out_extent(h, spec), wo = conv_out_extent(wd, spec);

  Tensor out(Shape{m, ho, wo, cout});
  const auto& xv = t.value(x).data;
  const auto& wv = t.value(w).data;
  const double* bv = bias.valid() ? t.value(bias).data.data() : nullptr;
  for (std::int64_t n = 0; n < m; ++n)
    for (std::int64_t oy = 0; oy < ho; ++oy)
      for (std::int64_t ox = 0; ox < wo; ++ox) {
        double* yr = out.data.data() + ((n * ho + oy) * wo + ox) * cout;
        if (bv) std::copy(bv, bv + cout, yr);
        for (int ky = 0; ky < k; ++ky) {
          const std::int64_t iy = oy * spec.stride - spec.padding + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const std::int64_t ix = ox * spec.stride - spec.padding + kx;
            if (ix < 0 || ix >= wd) continue;
            const double* xr = xv.data() + ((n * h + iy) * wd + ix) * cin;
            const double* wk = wv.data() + static_cast<std::int64_t>(ky * k + kx) * cin * cout;
            for (std::int64_t ci = 0; ci < cin; ++ci) {
              const double a = xr[ci];
              if (a != 0.0) axpy(a, wk + ci * cout, yr, cout);
            }
          }
        }
      }

  std::vector<Var> parents{x, w};
  if (bias.valid()) parents.push_back(bias);
  return t.record(std::move(out), parents, [x, w, bias, spec, m, h, wd, cin, cout, ho, wo](Tape& tp, int self) {
    const int k2 = spec.kernel;
    const auto& g = tp.grad(Var{self});
    const auto& xv2 = tp.value(x).data;
    const auto& wv2 = tp.value(w).data;
    if (bias.valid() && tp.requires_grad(bias)) {
      auto& db = tp.grad_mut(bias);
      for (std::size_t i = 0; i < g.size(); ++i) db[i % static_cast<std::size_t>(cout)] += g[i];
    }
    const bool need_x = tp.requires_grad(x), need_w = tp.requires_grad(w);
    if (!need_x && !need_w) return;
    std::vector<double> wt;
    if (need_x) {
      // Transposed taps: [k*k, Cout, Cin].
      wt.resize(wv2.size());
      for (std::int64_t tap = 0; tap < k2 * k2; ++tap)
        for (std::int64_t ci = 0; ci < cin; ++ci)
          for (std::int64_t co = 0; co < cout; ++co)
            wt[static_cast<std::size_t>((tap * cout + co) * cin + ci)] = wv2[static_cast<std::size_t>((tap * cin + ci) * cout + co)];
    }
    std::vector<double>* dx = need_x ? &tp.grad_mut(x) : nullptr;
    std::vector<double>* dw = need_w ? &tp.grad_mut(w) : nullptr;
    for (std::int64_t n = 0; n < m; ++n)
      for (std::int64_t oy = 0; oy < ho; ++oy)
        for (std::int64_t ox = 0; ox < wo; ++ox) {
          const double* gr = g.data() + ((n * ho + oy) * wo + ox) * cout;
          for (int ky = 0; ky < k2; ++ky) {
            const std::int64_t iy = oy * spec.stride - spec.padding + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < k2; ++kx) {
              const std::int64_t ix = ox * spec.stride - spec.padding + kx;
              if (ix < 0 || ix >= wd) continue;
              const std::int64_t tap = ky * k2 + kx;
              const std::int64_t xoff = ((n * h + iy) * wd + ix) * cin;
              if (dx) {
                double* dxr = dx->data() + xoff;
                const double* wtk = wt.data() + tap * cout * cin;
                for (std::int64_t co = 0; co < cout; ++co) {
                  const double a = gr[co];
                  if (a != 0.0) axpy(a, wtk + co * cin, dxr, cin);
                }
              }
              if (dw) {
                const double* xr = xv2.data() + xoff;
                double* dwk = dw->data() + tap * cin * cout;
                for (std::int64_t ci = 0; ci < cin; ++ci) {
                  const double a = xr[ci];
                  if (a != 0.0) axpy(a, gr, dwk + ci * cout, cout);
                }
              }
            }
          }
        }
  });
}

Var avg_pool2(Tape& t, Var x) {
  const auto& xs = t.shape(x);
  if (xs.size() != 4 || xs[1] % 2 != 0 || xs[2] % 2 != 0)
    throw ShapeError("avg_pool2 expects [M, H, W, C] with even H and W, got " + shape_string(xs));
  const std::int64_t m = xs[0], h = xs[1], wd = xs[2], c = xs[3];
  const std::int64_t ho = h / 2, wo = wd / 2;
  Tensor out(Shape{m, ho, wo, c});
  const auto& xv = t.value(x).data;
  for (std::int64_t n = 0; n < m; ++n)
    for (std::int64_t oy = 0; oy < ho; ++oy)
      for (std::int64_t ox = 0; ox < wo; ++ox) {
        double* yr = out.data.data() + ((n * ho + oy) * wo + ox) * c;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const double* xr = xv.data() + ((n * h + 2 * oy + dy) * wd + 2 * ox + dx) * c;
            for (std::int64_t k = 0; k < c; ++k) yr[k] += 0.25 * xr[k];
          }
      }
  return t.record(std::move(out), {x}, [x, m, h, wd, c, ho, wo](Tape& tp, int self) {
    const auto& g = tp.grad(Var{self});
    auto& d = tp.grad_mut(x);
    for (std::int64_t n = 0; n < m; ++n)
      for (std::int64_t oy = 0; oy < ho; ++oy)
        for (std::int64_t ox = 0; ox < wo; ++ox) {
          const double* gr = g.data() + ((n * ho + oy) * wo + ox) * c;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              double* dr = d.data() + ((n * h + 2 * oy + dy) * wd + 2 * ox + dx) * c;
              for (std::int64_t k = 0; k < c; ++k) dr[k] += 0.25 * gr[k];
            }
        }
  });
}

Var linear(Tape& t, Var x, Var w, Var bias) {
  const auto& xs = t.shape(x);
  const auto& ws = t.shape(w);
  if (xs.size() != 2 || ws.size() != 2 || ws[0] != xs[1])
    throw ShapeError("linear: " + shape_string(xs) + " x " + shape_string(ws));
  const std::int64_t m = xs[0], cin = xs[1], cout = ws[1];
  if (bias.valid() && t.shape(bias) != Shape{cout}) throw ShapeError("linear bias must be [Cout]");
  Tensor out(Shape{m, cout});
  const auto& xv = t.value(x).data;
  const auto& wv = t.value(w).data;
  for (std::int64_t n = 0; n < m; ++n) {
    double* yr = out.data.data() + n * cout;
    if (bias.valid()) std::copy(t.value(bias).data.begin(), t.value(bias).data.end(), yr);
    for (std::int64_t ci = 0; ci < cin; ++ci) axpy(xv[static_cast<std::size_t>(n * cin + ci)], wv.data() + ci * cout, yr, cout);
  }
  std::vector<Var> parents{x, w};
  if (bias.valid()) parents.push_back(bias);
  return t.record(std::move(out), parents, [x, w, bias, m, cin, cout](Tape& tp, int self) {
    const auto& g = tp.grad(Var{self});
    if (bias.valid() && tp.requires_grad(bias)) {
      auto& db = tp.grad_mut(bias);
      for (std::size_t i = 0; i < g.size(); ++i) db[i % static_cast<std::size_t>(cout)] += g[i];
    }
    if (tp.requires_grad(x)) {
      const auto& wv2 = tp.value(w).data;
      auto& dx = tp.grad_mut(x);
      for (std::int64_t n = 0; n < m; ++n)
        for (std::int64_t ci = 0; ci < cin; ++ci) {
          double s = 0.0;
          for (std::int64_t co = 0; co < cout; ++co) s += wv2[static_cast<std::size_t>(ci * cout + co)] * g[static_cast<std::size_t>(n * cout + co)];
          dx[static_cast<std::size_t>(n * cin + ci)] += s;
        }
    }
    if (tp.requires_grad(w)) {
      const auto& xv2 = tp.value(x).data;
      auto& dw = tp.grad_mut(w);
      for (std::int64_t n = 0; n < m; ++n)
        for (std::int64_t ci = 0; ci < cin; ++ci)
          axpy(xv2[static_cast<std::size_t>(n * cin + ci)], g.data() + n * cout, dw.data() + ci * cout, cout);
    }
  });
}

std::array<Var, 3> slice_planes(Tape& t, Var field) {
  const auto& s = t.shape(field);
  if (s.size() != 5 || s[1] != s[2] || s[2] != s[3])
    throw ShapeError("slice_planes expects a cubic [B, G, G, G, C] field, got " + shape_string(s));
  const std::int64_t b = s[0], g = s[1], c = s[4];
  Var rows = reshape(t, field, Shape{b * g * g * g, c});
  auto vox = [g](std::int64_t bi, std::int64_t x, std::int64_t y, std::int64_t z) {
    return ((bi * g + z) * g + y) * g + x;
  };
  std::vector<std::int64_t> xy, yz, xz;
  const auto n = static_cast<std::size_t>(b * g * g * g);
  xy.reserve(n);
  yz.reserve(n);
  xz.reserve(n);
  for (std::int64_t bi = 0; bi < b; ++bi)
    for (std::int64_t k = 0; k < g; ++k)
      for (std::int64_t v = 0; v < g; ++v)
        for (std::int64_t u = 0; u < g; ++u) {
          xy.push_back(vox(bi, u, v, k));  // z = k, image (x=u, y=v)
          yz.push_back(vox(bi, k, u, v));  // x = k, image (y=u, z=v)
          xz.push_back(vox(bi, u, k, v));  // y = k, image (x=u, z=v)
        }
  const Shape img{b * g, g, g, c};
  return {gather_rows(t, rows, std::move(xy), img), gather_rows(t, rows, std::move(yz), img),
          gather_rows(t, rows, std::move(xz), img)};
}

}  // namespace octsr
