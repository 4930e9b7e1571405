// SPDX-License-Identifier: Apache-2.0
//
// Microstructure statistics of label volumes. 2D images (nz = 1) are
// accepted everywhere; axes of extent 1 simply contribute no pairs.
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "octsr/volume.hpp"

namespace octsr {

struct PhaseCounts {
  std::vector<std::int64_t> counts;  // per class
  std::int64_t total = 0;
  std::vector<double> fractions() const;
};

PhaseCounts phase_counts(const LabelVolume& v);
std::vector<double> volume_fraction(const LabelVolume& v);

/// Internal faces between 6-connected neighbours, tallied per unordered class
/// pair (a <= b). Same-class faces are included, so fractions sum to one.
struct PairFractions {
  int n_classes = 0;
  std::vector<std::int64_t> counts;  // packed upper triangle, see index()
  std::int64_t faces = 0;

  std::size_t index(int a, int b) const;
  std::int64_t count(int a, int b) const { return counts[index(a, b)]; }
  double fraction(int a, int b) const;
};

PairFractions relative_surface_area(const LabelVolume& v);

/// S2(r) for r = 0..max_lag: probability that both ends of an axis-aligned
/// segment of length r lie in `phase`, pooled over every valid position on
/// every axis longer than r.
std::vector<double> two_point_correlation(const LabelVolume& v, int phase, int max_lag);

struct Summary {
  std::vector<double> values;
  double mean = 0.0;
  double std = 0.0;  // population
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

/// Quartiles interpolate linearly between order statistics.
Summary summarize(std::vector<double> values);

using PatchMetric = std::function<double(const LabelVolume&)>;

/// Metric over `n_patches` uniformly placed patches; origins are drawn in
/// sequence from `rng`.
Summary patch_statistics(const LabelVolume& v, int n_patches, Dims3 patch, Rng& rng, const PatchMetric& metric);

struct CorrelationSummary {
  std::vector<double> mean;  // per lag
  std::vector<double> std;
};

CorrelationSummary patch_two_point_correlation(const LabelVolume& v, int phase, int max_lag, int n_patches,
                                               Dims3 patch, Rng& rng);

void write_fraction_csv(std::ostream& os, const PhaseCounts& c, std::span<const std::string> names = {});
void write_pair_csv(std::ostream& os, const PairFractions& p, std::span<const std::string> names = {});
void write_correlation_csv(std::ostream& os, const CorrelationSummary& s);
void write_summary_csv_header(std::ostream& os);
void write_summary_csv_row(std::ostream& os, const std::string& metric, const Summary& s);

}  // namespace octsr
