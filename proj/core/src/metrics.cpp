// SPDX-License-Identifier: Apache-2.0
#include "octsr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "octsr/error.hpp"

namespace octsr {

std::vector<double> PhaseCounts::fractions() const {
  std::vector<double> f(counts.size(), 0.0);
  if (total == 0) return f;
  for (std::size_t i = 0; i < counts.size(); ++i) f[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
  // Rounding can leave the index-order sum an ulp or two away from 1. The
  // smallest ulp-level move of one nonzero entry (largest first) that makes
  // the sum exact is applied.
  auto sum = [](const std::vector<double>& g) {
    double acc = 0.0;
    for (double x : g) acc += x;
    return acc;
  };
  if (sum(f) == 1.0) return f;
  std::vector<std::size_t> order(f.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&f](std::size_t a, std::size_t b) { return f[a] > f[b]; });
  for (int steps = 1; steps <= 8; ++steps)
    for (std::size_t i : order) {
      if (counts[i] == 0) continue;
      for (double dir : {2.0, 0.0}) {
        std::vector<double> g = f;
        for (int k = 0; k < steps; ++k) g[i] = std::nextafter(g[i], dir);
        if (sum(g) == 1.0) return g;
      }
    }
  return f;
}

PhaseCounts phase_counts(const LabelVolume& v) {
  PhaseCounts c;
  c.counts.assign(static_cast<std::size_t>(v.n_classes()), 0);
  for (auto label : v.data()) ++c.counts[label];
  c.total = static_cast<std::int64_t>(v.data().size());
  return c;
}

std::vector<double> volume_fraction(const LabelVolume& v) { return phase_counts(v).fractions(); }

std::size_t PairFractions::index(int a, int b) const {
  if (a > b) std::swap(a, b);
  if (a < 0 || b >= n_classes) throw ShapeError("class pair out of range");
  // Row a of the upper triangle starts after sum_{i<a} (n - i) entries.
  return static_cast<std::size_t>(a * n_classes - a * (a - 1) / 2 + (b - a));
}

double PairFractions::fraction(int a, int b) const {
  return faces == 0 ? 0.0 : static_cast<double>(count(a, b)) / static_cast<double>(faces);
}

PairFractions relative_surface_area(const LabelVolume& v) {
  PairFractions p;
  p.n_classes = v.n_classes();
  p.counts.assign(static_cast<std::size_t>(p.n_classes * (p.n_classes + 1) / 2), 0);
  const Dims3& d = v.dims();
  const auto data = v.data();
  const std::int64_t stride[3] = {1, d.nx, d.nx * d.ny};
  for (std::int64_t z = 0; z < d.nz; ++z)
    for (std::int64_t y = 0; y < d.ny; ++y)
      for (std::int64_t x = 0; x < d.nx; ++x) {
        const std::int64_t i = d.index(x, y, z);
        const bool has[3] = {x + 1 < d.nx, y + 1 < d.ny, z + 1 < d.nz};
        for (int a = 0; a < 3; ++a)
          if (has[a]) {
            ++p.counts[p.index(data[static_cast<std::size_t>(i)], data[static_cast<std::size_t>(i + stride[a])])];
            ++p.faces;
          }
      }
  return p;
}

std::vector<double> two_point_correlation(const LabelVolume& v, int phase, int max_lag) {
  const Dims3& d = v.dims();
  const std::int64_t ext[3] = {d.nx, d.ny, d.nz};
  const std::int64_t longest = std::max({d.nx, d.ny, d.nz});
  if (max_lag < 0 || max_lag >= longest)
    throw ShapeError("max_lag " + std::to_string(max_lag) + " must be below the longest extent of " + to_string(d));
  const auto data = v.data();
  if (phase < 0 || phase >= v.n_classes()) throw ShapeError("phase " + std::to_string(phase) + " out of range");
  const auto ph = static_cast<std::uint8_t>(phase);
  const std::int64_t stride[3] = {1, d.nx, d.nx * d.ny};
  std::vector<double> s2{volume_fraction(v).at(static_cast<std::size_t>(phase))};
  for (int r = 1; r <= max_lag; ++r) {
    std::int64_t hits = 0, pairs = 0;
    for (int a = 0; a < 3; ++a) {
      if (ext[a] <= r) continue;
      std::int64_t lim[3] = {d.nx, d.ny, d.nz};
      lim[a] -= r;
      pairs += lim[0] * lim[1] * lim[2];
      for (std::int64_t z = 0; z < lim[2]; ++z)
        for (std::int64_t y = 0; y < lim[1]; ++y) {
          const std::int64_t row = d.index(0, y, z);
          for (std::int64_t x = 0; x < lim[0]; ++x) {
            const std::int64_t i = row + x;
            hits += (data[static_cast<std::size_t>(i)] == ph) & (data[static_cast<std::size_t>(i + r * stride[a])] == ph);
          }
        }
    }
    s2.push_back(static_cast<double>(hits) / static_cast<double>(pairs));
  }
  return s2;
}

Summary summarize(std::vector<double> values) {
  Summary s;
  s.values = values;
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double x : values) sum += x;
  s.mean = sum / n;
  double ss = 0.0;
  for (double x : values) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / n);
  auto quantile = [&](double q) {
    const double pos = q * (n - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  s.min = values.front();
  s.q1 = quantile(0.25);
  s.median = quantile(0.5);
  s.q3 = quantile(0.75);
  s.max = values.back();
  return s;
}

Summary patch_statistics(const LabelVolume& v, int n_patches, Dims3 patch, Rng& rng, const PatchMetric& metric) {
  if (n_patches < 1) throw ShapeError("patch_statistics needs at least one patch");
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(n_patches));
  for (int i = 0; i < n_patches; ++i) values.push_back(metric(sample_subvolume(v, patch, rng)));
  return summarize(std::move(values));
}

CorrelationSummary patch_two_point_correlation(const LabelVolume& v, int phase, int max_lag, int n_patches,
                                               Dims3 patch, Rng& rng) {
  if (n_patches < 1) throw ShapeError("patch statistics need at least one patch");
  std::vector<std::vector<double>> curves;
  for (int i = 0; i < n_patches; ++i)
    curves.push_back(two_point_correlation(sample_subvolume(v, patch, rng), phase, max_lag));
  CorrelationSummary out;
  for (int r = 0; r <= max_lag; ++r) {
    std::vector<double> at;
    for (const auto& c : curves) at.push_back(c[static_cast<std::size_t>(r)]);
    const Summary s = summarize(std::move(at));
    out.mean.push_back(s.mean);
    out.std.push_back(s.std);
  }
  return out;
}

namespace {

std::string class_name(std::span<const std::string> names, int i) {
  return static_cast<std::size_t>(i) < names.size() ? names[static_cast<std::size_t>(i)] : std::to_string(i);
}

}  // namespace

void write_fraction_csv(std::ostream& os, const PhaseCounts& c, std::span<const std::string> names) {
  const auto f = c.fractions();
  const auto old = os.precision(17);
  os << "phase,voxels,fraction\n";
  for (std::size_t i = 0; i < c.counts.size(); ++i)
    os << class_name(names, static_cast<int>(i)) << ',' << c.counts[i] << ',' << f[i] << '\n';
  os.precision(old);
}

void write_pair_csv(std::ostream& os, const PairFractions& p, std::span<const std::string> names) {
  const auto old = os.precision(17);
  os << "phase_a,phase_b,faces,fraction\n";
  for (int a = 0; a < p.n_classes; ++a)
    for (int b = a; b < p.n_classes; ++b)
      os << class_name(names, a) << ',' << class_name(names, b) << ',' << p.count(a, b) << ',' << p.fraction(a, b)
         << '\n';
  os.precision(old);
}

void write_correlation_csv(std::ostream& os, const CorrelationSummary& s) {
  const auto old = os.precision(17);
  os << "lag,mean,std\n";
  for (std::size_t r = 0; r < s.mean.size(); ++r) os << r << ',' << s.mean[r] << ',' << s.std[r] << '\n';
  os.precision(old);
}

void write_summary_csv_header(std::ostream& os) { os << "metric,n,mean,std,min,q1,median,q3,max\n"; }

void write_summary_csv_row(std::ostream& os, const std::string& metric, const Summary& s) {
  const auto old = os.precision(17);
  os << metric << ',' << s.values.size() << ',' << s.mean << ',' << s.std << ',' << s.min << ',' << s.q1 << ','
     << s.median << ',' << s.q3 << ',' << s.max << '\n';
  os.precision(old);
}

}  // namespace octsr
