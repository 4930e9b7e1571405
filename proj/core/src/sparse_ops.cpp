// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <sstream>

#include "octsr/error.hpp"
#include "octsr/sparse.hpp"

namespace octsr {

namespace {

constexpr std::int64_t kDenseLookupLimit = std::int64_t{1} << 22;

std::uint64_t pack(int b, std::int64_t x, std::int64_t y, std::int64_t z) {
  return (static_cast<std::uint64_t>(b) << 48) | (static_cast<std::uint64_t>(z) << 32) |
         (static_cast<std::uint64_t>(y) << 16) | static_cast<std::uint64_t>(x);
}

std::string coord_string(const SparseCoord& c) {
  std::ostringstream os;
  os << "(b" << c[0] << ":" << c[1] << "," << c[2] << "," << c[3] << ")";
  return os.str();
}

std::int64_t rows_of(const Tape& t, Var v) { return t.shape(v).at(0); }
std::int64_t cols_of(const Tape& t, Var v) { return t.shape(v).at(1); }

}  // namespace

// ---------------------------------------------------------------------------

bool CoordSet::coord_less(const SparseCoord& a, const SparseCoord& b) {
  if (a[0] != b[0]) return a[0] < b[0];
  if (a[3] != b[3]) return a[3] < b[3];
  if (a[2] != b[2]) return a[2] < b[2];
  return a[1] < b[1];
}

CoordSet::CoordSet(int batch_size, std::int64_t grid_edge, std::vector<SparseCoord> coords)
    : batch_size_(batch_size), grid_edge_(grid_edge), coords_(std::move(coords)) {
  if (batch_size_ < 1 || grid_edge_ < 1 || grid_edge_ >= 65536 || batch_size_ >= 65536)
    throw ShapeError("coordinate set needs batch >= 1 and 1 <= grid edge < 65536");
  for (std::size_t i = 0; i < coords_.size(); ++i) {
    const auto& c = coords_[i];
    if (c[0] < 0 || c[0] >= batch_size_ || c[1] < 0 || c[2] < 0 || c[3] < 0 || c[1] >= grid_edge_ ||
        c[2] >= grid_edge_ || c[3] >= grid_edge_)
      throw ShapeError("coordinate " + coord_string(c) + " outside a " + std::to_string(grid_edge_) + "^3 grid");
    if (i > 0 && !coord_less(coords_[i - 1], c))
      throw ShapeError("coordinates must be sorted and unique near " + coord_string(c));
  }
  const std::int64_t cells = static_cast<std::int64_t>(batch_size_) * grid_edge_ * grid_edge_ * grid_edge_;
  if (cells <= kDenseLookupLimit) {
    dense_lookup_.assign(static_cast<std::size_t>(cells), -1);
    for (std::size_t i = 0; i < coords_.size(); ++i) {
      const auto& c = coords_[i];
      dense_lookup_[static_cast<std::size_t>(((c[0] * grid_edge_ + c[3]) * grid_edge_ + c[2]) * grid_edge_ + c[1])] =
          static_cast<std::int32_t>(i);
    }
  } else {
    hash_.reserve(coords_.size());
    for (std::size_t i = 0; i < coords_.size(); ++i) {
      const auto& c = coords_[i];
      hash_.emplace(pack(c[0], c[1], c[2], c[3]), static_cast<std::int32_t>(i));
    }
  }
}

std::shared_ptr<const CoordSet> CoordSet::full_grid(int batch_size, std::int64_t g) {
  std::vector<SparseCoord> coords;
  coords.reserve(static_cast<std::size_t>(batch_size * g * g * g));
  for (int b = 0; b < batch_size; ++b)
    for (std::int32_t z = 0; z < g; ++z)
      for (std::int32_t y = 0; y < g; ++y)
        for (std::int32_t x = 0; x < g; ++x) coords.push_back({b, x, y, z});
  return std::make_shared<const CoordSet>(batch_size, g, std::move(coords));
}

std::int64_t CoordSet::find(int b, std::int64_t x, std::int64_t y, std::int64_t z) const {
  if (b < 0 || b >= batch_size_ || x < 0 || y < 0 || z < 0 || x >= grid_edge_ || y >= grid_edge_ || z >= grid_edge_)
    return -1;
  if (!dense_lookup_.empty())
    return dense_lookup_[static_cast<std::size_t>(((b * grid_edge_ + z) * grid_edge_ + y) * grid_edge_ + x)];
  auto it = hash_.find(pack(b, x, y, z));
  return it == hash_.end() ? -1 : it->second;
}

std::vector<int> CoordSet::batch_of_rows() const {
  std::vector<int> out(coords_.size());
  for (std::size_t i = 0; i < coords_.size(); ++i) out[i] = coords_[i][0];
  return out;
}

KernelMap build_kernel_map(const CoordSet& coords, int kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw ShapeError("stride-1 sparse convolution needs an odd kernel");
  const int r = (kernel - 1) / 2;
  KernelMap map;
  map.kernel = kernel;
  map.pairs.resize(static_cast<std::size_t>(kernel * kernel * kernel));
  for (auto& p : map.pairs) p.reserve(static_cast<std::size_t>(coords.size()));
  for (std::int64_t j = 0; j < coords.size(); ++j) {
    const auto& u = coords[j];
    int o = 0;
    for (int dz = -r; dz <= r; ++dz)
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx, ++o) {
          const auto i = coords.find(u[0], u[1] + dx, u[2] + dy, u[3] + dz);
          if (i >= 0) map.pairs[static_cast<std::size_t>(o)].emplace_back(static_cast<std::int32_t>(i),
                                                                          static_cast<std::int32_t>(j));
        }
  }
  return map;
}

// ---------------------------------------------------------------------------
// Convolution kernels shared by the sparse and dense paths.

namespace {

// y[co] += a * w[co] over a row of weights.
inline void axpy(double a, const double* w, double* y, std::int64_t n) {
  for (std::int64_t k = 0; k < n; ++k) y[k] += a * w[k];
}

void check_weight(const Tape& t, Var w, std::int64_t taps, std::int64_t cin, const char* op) {
  const auto& s = t.shape(w);
  if (s.size() != 3 || s[0] != taps || s[1] != cin)
    throw ShapeError(std::string(op) + ": weight shape " + shape_string(s) + " does not match " +
                     std::to_string(taps) + " taps x " + std::to_string(cin) + " input channels");
}

void check_bias(const Tape& t, Var b, std::int64_t cout, const char* op) {
  if (!b.valid()) return;
  if (t.shape(b) != Shape{cout}) throw ShapeError(std::string(op) + ": bias must have shape [Cout]");
}

// Gathers a list of (input row, output row, tap) triples into a recorded
// op: out[j] = bias + sum W[tap]^T x[i].
struct TapPairs {
  std::vector<std::vector<std::pair<std::int32_t, std::int32_t>>> by_tap;
};

Var tap_conv(Tape& t, Var x, Var w, Var bias, std::int64_t out_rows, std::shared_ptr<const TapPairs> pairs) {
  const std::int64_t cin = cols_of(t, x);
  const std::int64_t cout = t.shape(w)[2];
  Tensor out(Shape{out_rows, cout});
  if (bias.valid()) {
    const auto& b = t.value(bias).data;
    for (std::int64_t j = 0; j < out_rows; ++j) std::copy(b.begin(), b.end(), out.data.begin() + j * cout);
  }
  const auto& xv = t.value(x).data;
  const auto& wv = t.value(w).data;
  for (std::size_t o = 0; o < pairs->by_tap.size(); ++o) {
    const double* wo = wv.data() + static_cast<std::int64_t>(o) * cin * cout;
    for (const auto& [i, j] : pairs->by_tap[o]) {
      const double* xr = xv.data() + static_cast<std::int64_t>(i) * cin;
      double* yr = out.data.data() + static_cast<std::int64_t>(j) * cout;
      for (std::int64_t ci = 0; ci < cin; ++ci) {
        const double a = xr[ci];
        if (a != 0.0) axpy(a, wo + ci * cout, yr, cout);
      }
    }
  }
  std::vector<Var> parents{x, w};
  if (bias.valid()) parents.push_back(bias);
  return t.record(std::move(out), parents, [x, w, bias, cin, cout, pairs](Tape& tp, int self) {
    const auto& g = tp.grad(Var{self});
    const std::int64_t n_out = static_cast<std::int64_t>(g.size()) / cout;
    if (bias.valid() && tp.requires_grad(bias)) {
      auto& db = tp.grad_mut(bias);
      for (std::int64_t j = 0; j < n_out; ++j)
        for (std::int64_t co = 0; co < cout; ++co) db[static_cast<std::size_t>(co)] += g[static_cast<std::size_t>(j * cout + co)];
    }
    const auto& wv2 = tp.value(w).data;
    const auto& xv2 = tp.value(x).data;
    if (tp.requires_grad(x)) {
      auto& dx = tp.grad_mut(x);
      std::vector<double> wt(static_cast<std::size_t>(cin * cout));
      for (std::size_t o = 0; o < pairs->by_tap.size(); ++o) {
        if (pairs->by_tap[o].empty()) continue;
        const double* wo = wv2.data() + static_cast<std::int64_t>(o) * cin * cout;
        for (std::int64_t ci = 0; ci < cin; ++ci)
          for (std::int64_t co = 0; co < cout; ++co) wt[static_cast<std::size_t>(co * cin + ci)] = wo[ci * cout + co];
        for (const auto& [i, j] : pairs->by_tap[o]) {
          const double* gr = g.data() + static_cast<std::int64_t>(j) * cout;
          double* dxr = dx.data() + static_cast<std::int64_t>(i) * cin;
          for (std::int64_t co = 0; co < cout; ++co) {
            const double a = gr[co];
            if (a != 0.0) axpy(a, wt.data() + co * cin, dxr, cin);
          }
        }
      }
    }
    if (tp.requires_grad(w)) {
      auto& dw = tp.grad_mut(w);
      for (std::size_t o = 0; o < pairs->by_tap.size(); ++o) {
        double* dwo = dw.data() + static_cast<std::int64_t>(o) * cin * cout;
        for (const auto& [i, j] : pairs->by_tap[o]) {
          const double* xr = xv2.data() + static_cast<std::int64_t>(i) * cin;
          const double* gr = g.data() + static_cast<std::int64_t>(j) * cout;
          for (std::int64_t ci = 0; ci < cin; ++ci) {
            const double a = xr[ci];
            if (a != 0.0) axpy(a, gr, dwo + ci * cout, cout);
          }
        }
      }
    }
  });
}

}  // namespace

SparseVar sparse_conv3(Tape& t, const SparseVar& x, Var weight, Var bias, const KernelMap& map) {
  const std::int64_t cin = cols_of(t, x.features);
  if (rows_of(t, x.features) != x.coords->size()) throw ShapeError("sparse_conv3: feature rows != coordinates");
  const std::int64_t taps = static_cast<std::int64_t>(map.kernel) * map.kernel * map.kernel;
  check_weight(t, weight, taps, cin, "sparse_conv3");
  check_bias(t, bias, t.shape(weight)[2], "sparse_conv3");
  auto pairs = std::make_shared<TapPairs>();
  pairs->by_tap = map.pairs;
  return {x.coords, tap_conv(t, x.features, weight, bias, x.coords->size(), std::move(pairs))};
}

SparseVar sparse_conv3(Tape& t, const SparseVar& x, Var weight, Var bias, int kernel) {
  return sparse_conv3(t, x, weight, bias, build_kernel_map(*x.coords, kernel));
}

SparseVar sparse_transpose_conv3_generative(Tape& t, const SparseVar& x, Var weight, Var bias) {
  const std::int64_t cin = cols_of(t, x.features);
  check_weight(t, weight, 8, cin, "sparse_transpose_conv3_generative");
  check_bias(t, bias, t.shape(weight)[2], "sparse_transpose_conv3_generative");
  const CoordSet& in = *x.coords;
  struct Child {
    SparseCoord c;
    std::int32_t parent;
    std::int32_t tap;
  };
  std::vector<Child> children;
  children.reserve(static_cast<std::size_t>(in.size() * 8));
  for (std::int64_t i = 0; i < in.size(); ++i) {
    const auto& u = in[i];
    for (int o = 0; o < 8; ++o)
      children.push_back({{u[0], 2 * u[1] + (o & 1), 2 * u[2] + ((o >> 1) & 1), 2 * u[3] + ((o >> 2) & 1)},
                          static_cast<std::int32_t>(i), o});
  }
  std::sort(children.begin(), children.end(),
            [](const Child& a, const Child& b) { return CoordSet::coord_less(a.c, b.c); });
  std::vector<SparseCoord> coords;
  coords.reserve(children.size());
  auto pairs = std::make_shared<TapPairs>();
  pairs->by_tap.resize(8);
  for (std::size_t j = 0; j < children.size(); ++j) {
    coords.push_back(children[j].c);
    pairs->by_tap[static_cast<std::size_t>(children[j].tap)].emplace_back(children[j].parent,
                                                                         static_cast<std::int32_t>(j));
  }
  auto out_coords = std::make_shared<const CoordSet>(in.batch_size(), in.grid_edge() * 2, std::move(coords));
  const auto n_out = out_coords->size();
  return {std::move(out_coords), tap_conv(t, x.features, weight, bias, n_out, std::move(pairs))};
}

// ---------------------------------------------------------------------------

Var normalize_rows(Tape& t, Var x, const std::vector<int>& group_of_row, int n_groups, Var gamma, Var beta,
                   double eps, NormStats* stats) {
  if (eps <= 0.0) throw Error("normalization epsilon must be positive");
  const std::int64_t n = rows_of(t, x), c = cols_of(t, x);
  if (n == 0) throw ShapeError("normalization over zero rows");
  if (static_cast<std::int64_t>(group_of_row.size()) != n) throw ShapeError("normalize_rows: group list size");
  if (t.shape(gamma) != Shape{c} || t.shape(beta) != Shape{c}) throw ShapeError("normalize_rows: gamma/beta shape");
  const auto& xv = t.value(x).data;
  std::vector<double> count(static_cast<std::size_t>(n_groups), 0.0);
  std::vector<double> mu(static_cast<std::size_t>(n_groups * c), 0.0), var(mu.size(), 0.0);
  for (std::int64_t i = 0; i < n; ++i) {
    const int gi = group_of_row[static_cast<std::size_t>(i)];
    count[static_cast<std::size_t>(gi)] += 1.0;
    for (std::int64_t k = 0; k < c; ++k) mu[static_cast<std::size_t>(gi * c + k)] += xv[static_cast<std::size_t>(i * c + k)];
  }
  for (int gi = 0; gi < n_groups; ++gi)
    for (std::int64_t k = 0; k < c; ++k)
      if (count[static_cast<std::size_t>(gi)] > 0) mu[static_cast<std::size_t>(gi * c + k)] /= count[static_cast<std::size_t>(gi)];
  for (std::int64_t i = 0; i < n; ++i) {
    const int gi = group_of_row[static_cast<std::size_t>(i)];
    for (std::int64_t k = 0; k < c; ++k) {
      const double d = xv[static_cast<std::size_t>(i * c + k)] - mu[static_cast<std::size_t>(gi * c + k)];
      var[static_cast<std::size_t>(gi * c + k)] += d * d;
    }
  }
  std::vector<double> inv_std(mu.size());
  for (int gi = 0; gi < n_groups; ++gi)
    for (std::int64_t k = 0; k < c; ++k) {
      auto idx = static_cast<std::size_t>(gi * c + k);
      if (count[static_cast<std::size_t>(gi)] > 0) var[idx] /= count[static_cast<std::size_t>(gi)];
      inv_std[idx] = 1.0 / std::sqrt(var[idx] + eps);
    }
  const auto& gv = t.value(gamma).data;
  const auto& bv = t.value(beta).data;
  Tensor out(Shape{n, c});
  std::vector<double> xhat(static_cast<std::size_t>(n * c));
  for (std::int64_t i = 0; i < n; ++i) {
    const int gi = group_of_row[static_cast<std::size_t>(i)];
    for (std::int64_t k = 0; k < c; ++k) {
      const auto idx = static_cast<std::size_t>(i * c + k);
      const auto s = static_cast<std::size_t>(gi * c + k);
      xhat[idx] = (xv[idx] - mu[s]) * inv_std[s];
      out.data[idx] = xhat[idx] * gv[static_cast<std::size_t>(k)] + bv[static_cast<std::size_t>(k)];
    }
  }
  if (stats) {
    stats->mean = mu;
    stats->variance = var;
  }
  return t.record(std::move(out), {x, gamma, beta},
                  [x, gamma, beta, c, n, n_groups, group_of_row, count, inv_std, xhat = std::move(xhat)](Tape& tp,
                                                                                                          int self) {
                    const auto& g = tp.grad(Var{self});
                    const auto& gv2 = tp.value(gamma).data;
                    // Per group/channel sums of dy and dy * xhat.
                    std::vector<double> sdy(static_cast<std::size_t>(n_groups * c), 0.0), sdyx(sdy.size(), 0.0);
                    for (std::int64_t i = 0; i < n; ++i) {
                      const int gi = group_of_row[static_cast<std::size_t>(i)];
                      for (std::int64_t k = 0; k < c; ++k) {
                        const auto idx = static_cast<std::size_t>(i * c + k);
                        sdy[static_cast<std::size_t>(gi * c + k)] += g[idx];
                        sdyx[static_cast<std::size_t>(gi * c + k)] += g[idx] * xhat[idx];
                      }
                    }
                    if (tp.requires_grad(beta)) {
                      auto& db = tp.grad_mut(beta);
                      for (int gi = 0; gi < n_groups; ++gi)
                        for (std::int64_t k = 0; k < c; ++k) db[static_cast<std::size_t>(k)] += sdy[static_cast<std::size_t>(gi * c + k)];
                    }
                    if (tp.requires_grad(gamma)) {
                      auto& dg = tp.grad_mut(gamma);
                      for (int gi = 0; gi < n_groups; ++gi)
                        for (std::int64_t k = 0; k < c; ++k) dg[static_cast<std::size_t>(k)] += sdyx[static_cast<std::size_t>(gi * c + k)];
                    }
                    if (tp.requires_grad(x)) {
                      auto& dx = tp.grad_mut(x);
                      for (std::int64_t i = 0; i < n; ++i) {
                        const int gi = group_of_row[static_cast<std::size_t>(i)];
                        const double m = count[static_cast<std::size_t>(gi)];
                        for (std::int64_t k = 0; k < c; ++k) {
                          const auto idx = static_cast<std::size_t>(i * c + k);
                          const auto s = static_cast<std::size_t>(gi * c + k);
                          dx[idx] += gv2[static_cast<std::size_t>(k)] * inv_std[s] / m *
                                     (m * g[idx] - sdy[s] - xhat[idx] * sdyx[s]);
                        }
                      }
                    }
                  });
}

Var normalize_rows_fixed(Tape& t, Var x, const std::vector<double>& mean, const std::vector<double>& variance,
                         Var gamma, Var beta, double eps) {
  const std::int64_t n = rows_of(t, x), c = cols_of(t, x);
  if (static_cast<std::int64_t>(mean.size()) != c || static_cast<std::int64_t>(variance.size()) != c)
    throw ShapeError("normalize_rows_fixed: statistics size");
  std::vector<double> inv_std(static_cast<std::size_t>(c));
  for (std::int64_t k = 0; k < c; ++k) inv_std[static_cast<std::size_t>(k)] = 1.0 / std::sqrt(variance[static_cast<std::size_t>(k)] + eps);
  const auto& xv = t.value(x).data;
  const auto& gv = t.value(gamma).data;
  const auto& bv = t.value(beta).data;
  Tensor out(Shape{n, c});
  std::vector<double> xhat(static_cast<std::size_t>(n * c));
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t k = 0; k < c; ++k) {
      const auto idx = static_cast<std::size_t>(i * c + k);
      xhat[idx] = (xv[idx] - mean[static_cast<std::size_t>(k)]) * inv_std[static_cast<std::size_t>(k)];
      out.data[idx] = xhat[idx] * gv[static_cast<std::size_t>(k)] + bv[static_cast<std::size_t>(k)];
    }
  return t.record(std::move(out), {x, gamma, beta}, [x, gamma, beta, c, inv_std, xhat = std::move(xhat)](Tape& tp, int self) {
    const auto& g = tp.grad(Var{self});
    const auto& gv2 = tp.value(gamma).data;
    const std::size_t cc = static_cast<std::size_t>(c);
    if (tp.requires_grad(beta)) {
      auto& db = tp.grad_mut(beta);
      for (std::size_t i = 0; i < g.size(); ++i) db[i % cc] += g[i];
    }
    if (tp.requires_grad(gamma)) {
      auto& dg = tp.grad_mut(gamma);
      for (std::size_t i = 0; i < g.size(); ++i) dg[i % cc] += g[i] * xhat[i];
    }
    if (tp.requires_grad(x)) {
      auto& dx = tp.grad_mut(x);
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * gv2[i % cc] * inv_std[i % cc];
    }
  });
}

Var softmax_rows(Tape& t, Var x) {
  const std::int64_t n = rows_of(t, x), c = cols_of(t, x);
  const auto& xv = t.value(x).data;
  Tensor out(Shape{n, c});
  for (std::int64_t i = 0; i < n; ++i) {
    const double* xr = xv.data() + i * c;
    double* yr = out.data.data() + i * c;
    const double m = *std::max_element(xr, xr + c);
    double s = 0.0;
    for (std::int64_t k = 0; k < c; ++k) s += (yr[k] = std::exp(xr[k] - m));
    for (std::int64_t k = 0; k < c; ++k) yr[k] /= s;
  }
  return t.record(std::move(out), {x}, [x, c](Tape& tp, int self) {
    const auto& g = tp.grad(Var{self});
    const auto& y = tp.value(Var{self}).data;
    auto& dx = tp.grad_mut(x);
    const std::size_t rows = g.size() / static_cast<std::size_t>(c);
    for (std::size_t i = 0; i < rows; ++i) {
      const std::size_t base = i * static_cast<std::size_t>(c);
      double dot = 0.0;
      for (std::int64_t k = 0; k < c; ++k) dot += g[base + static_cast<std::size_t>(k)] * y[base + static_cast<std::size_t>(k)];
      for (std::int64_t k = 0; k < c; ++k) {
        const auto idx = base + static_cast<std::size_t>(k);
        dx[idx] += y[idx] * (g[idx] - dot);
      }
    }
  });
}

SparseVar sparse_relu(Tape& t, const SparseVar& x) { return {x.coords, relu(t, x.features)}; }

SparseVar sparse_softmax(Tape& t, const SparseVar& x) { return {x.coords, softmax_rows(t, x.features)}; }

SparseVar prune(Tape& t, const SparseVar& x, const std::vector<bool>& mask) {
  if (static_cast<std::int64_t>(mask.size()) != x.coords->size()) throw ShapeError("prune: mask length != node count");
  std::vector<std::int64_t> keep;
  std::vector<SparseCoord> coords;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    keep.push_back(static_cast<std::int64_t>(i));
    coords.push_back((*x.coords)[static_cast<std::int64_t>(i)]);
  }
  auto cs = std::make_shared<const CoordSet>(x.coords->batch_size(), x.coords->grid_edge(), std::move(coords));
  const auto c = cols_of(t, x.features);
  const auto n = static_cast<std::int64_t>(keep.size());
  return {std::move(cs), gather_rows(t, x.features, std::move(keep), Shape{n, c})};
}

Var reconstruct_dense(Tape& t, const SparseVar& current, const std::vector<SparseVar>& memorized) {
  const std::int64_t g = current.coords->grid_edge();
  const int batch = current.coords->batch_size();
  const std::int64_t c = cols_of(t, current.features);
  std::vector<const SparseVar*> sources;
  for (const auto& m : memorized) sources.push_back(&m);
  sources.push_back(&current);

  const std::int64_t cells = static_cast<std::int64_t>(batch) * g * g * g;
  std::vector<std::int64_t> owner(static_cast<std::size_t>(cells), -1);
  std::vector<Var> parts;
  std::vector<std::string> problems;
  std::int64_t base = 0;
  for (const SparseVar* s : sources) {
    const std::int64_t sg = s->coords->grid_edge();
    if (sg <= 0 || g % sg != 0 || s->coords->batch_size() != batch || cols_of(t, s->features) != c)
      throw ShapeError("reconstruct_dense: memorized set does not nest in the current grid");
    const std::int64_t f = g / sg;
    for (std::int64_t i = 0; i < s->coords->size(); ++i) {
      const auto& u = (*s->coords)[i];
      for (std::int64_t z = u[3] * f; z < (u[3] + 1) * f; ++z)
        for (std::int64_t y = u[2] * f; y < (u[2] + 1) * f; ++y)
          for (std::int64_t x = u[1] * f; x < (u[1] + 1) * f; ++x) {
            auto& o = owner[static_cast<std::size_t>(((u[0] * g + z) * g + y) * g + x)];
            if (o != -1 && problems.size() < 8)
              problems.push_back("overlap at " + coord_string({u[0], static_cast<std::int32_t>(x),
                                                               static_cast<std::int32_t>(y), static_cast<std::int32_t>(z)}));
            o = base + i;
          }
    }
    base += s->coords->size();
    parts.push_back(s->features);
  }
  for (std::int64_t v = 0; v < cells && problems.size() < 8; ++v) {
    if (owner[static_cast<std::size_t>(v)] != -1) continue;
    problems.push_back("gap at " + coord_string({static_cast<std::int32_t>(v / (g * g * g)),
                                                 static_cast<std::int32_t>(v % g),
                                                 static_cast<std::int32_t>((v / g) % g),
                                                 static_cast<std::int32_t>((v / (g * g)) % g)}));
  }
  if (!problems.empty()) {
    std::string msg = "reconstruct_dense: node sets do not tile the grid:";
    for (const auto& p : problems) msg += " " + p;
    throw ShapeError(msg);
  }
  Var all = parts.size() == 1 ? parts[0] : concat_rows(t, parts);
  return gather_rows(t, all, std::move(owner), Shape{batch, g, g, g, c});
}

}  // namespace octsr
