// SPDX-License-Identifier: Apache-2.0
//
// Analytical training-memory model. Each layer contributes its output
// activations twice (value and gradient) and its parameters three times
// (weights and two optimizer moments).
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "octsr/generator.hpp"
#include "octsr/octree.hpp"

namespace octsr {

inline constexpr double kBytesPerGB = 1073741824.0;  // 2^30

struct LayerSpec {
  std::string name;
  std::string kind;  // conv3d, conv_transpose3d, instance_norm3d, batch_norm3d, softmax, prune
  int stage = 1;
  std::int64_t in_channels = 0;
  std::int64_t channels = 0;  // output channels
  std::int64_t edge = 0;      // output grid edge
  int kernel = 0;             // convolutions only
  std::int64_t params = 0;
  bool sparse = true;  // false for layers that stay dense in the octree model

  std::int64_t activations() const { return channels * edge * edge * edge; }
};

/// Parameter count implied by kind, kernel and widths.
std::int64_t expected_params(const LayerSpec& l);
/// Throws ShapeError listing every layer whose count disagrees with its shape.
void validate_architecture(std::span<const LayerSpec> arch);

/// Stage-1 dense block plus every classify/prune step, with the convolution
/// widths of `cfg`.
std::vector<LayerSpec> generator_architecture(const GeneratorConfig& cfg);
/// Same layout as a conventional dense network: no classifiers or pruning,
/// a single softmax head after the last stage.
std::vector<LayerSpec> dense_generator_architecture(const GeneratorConfig& cfg);

std::vector<LayerSpec> parse_architecture(const std::string& json_text);
std::vector<LayerSpec> load_architecture(const std::filesystem::path& path);
std::string architecture_json(std::span<const LayerSpec> arch);

struct LedgerRow {
  std::string name;
  int stage = 1;
  double activation_elements = 0.0;  // fractional under partial occupancy
  std::int64_t params = 0;
  double activation_bytes = 0.0;  // counted twice
  double param_bytes = 0.0;       // counted thrice
  double incremental_gb = 0.0;
  double cumulative_gb = 0.0;
};

struct MemoryLedger {
  double bytes_per_element = 2.0;
  std::vector<LedgerRow> rows;

  double total_gb() const { return rows.empty() ? 0.0 : rows.back().cumulative_gb; }
  int stage_count() const;
  /// Cumulative GB after the last layer of each stage, i.e. the peak while
  /// that stage trains.
  std::vector<double> stage_peaks() const;
  double activation_bytes() const;
  double param_bytes() const;
};

MemoryLedger estimate_dense_memory(std::span<const LayerSpec> arch, double bytes_per_element = 2.0);

/// `occupancy[s - 1]` scales activations of sparse layers at stage s.
MemoryLedger estimate_octree_memory(std::span<const LayerSpec> arch, std::span<const double> occupancy,
                                    double bytes_per_element = 2.0);

/// Active nodes (dense + mixed) over grid cells per stage.
std::vector<double> occupancy_from_counts(std::span<const StageCounts> counts, std::int64_t first_grid_edge);
std::vector<StageCounts> load_stage_counts_csv(const std::filesystem::path& path);

struct StageComparison {
  int stage = 0;
  double dense_gb = 0.0;
  double octree_gb = 0.0;
  double ratio = 0.0;  // octree / dense
  bool dense_oom = false;
  bool octree_oom = false;
};

std::vector<StageComparison> compare_report(const MemoryLedger& dense, const MemoryLedger& octree, double budget_gb);
/// First stage whose dense peak exceeds the budget, or 0.
int first_oom_stage(std::span<const StageComparison> report, bool octree = false);

void write_ledger_csv(std::ostream& os, const MemoryLedger& ledger);
void write_comparison_csv(std::ostream& os, std::span<const StageComparison> report);
void write_comparison_text(std::ostream& os, std::span<const StageComparison> report, double budget_gb);

}  // namespace octsr
