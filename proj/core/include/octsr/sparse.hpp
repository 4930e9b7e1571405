// SPDX-License-Identifier: Apache-2.0
//
// Coordinate-sparse 3D tensors and the differentiable operators that act on
// them. A SparseVar pairs an immutable coordinate set with an [N, C] feature
// node on a Tape; row i of the features belongs to coordinate i.
#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <unordered_map>
#include <vector>

#include "octsr/autodiff.hpp"

namespace octsr {

/// (batch, x, y, z)
using SparseCoord = std::array<std::int32_t, 4>;

/// Sorted, duplicate-free coordinates on a grid of `grid_edge` cells per axis.
/// Sort order is (batch, z, y, x), so a fully occupied grid enumerates voxels
/// x-fastest exactly like the dense containers.
class CoordSet {
 public:
  /// Throws unless coords are sorted, unique and inside the grid.
  CoordSet(int batch_size, std::int64_t grid_edge, std::vector<SparseCoord> coords);

  static std::shared_ptr<const CoordSet> full_grid(int batch_size, std::int64_t grid_edge);

  int batch_size() const { return batch_size_; }
  std::int64_t grid_edge() const { return grid_edge_; }
  std::int64_t size() const { return static_cast<std::int64_t>(coords_.size()); }
  bool empty() const { return coords_.empty(); }
  const std::vector<SparseCoord>& coords() const { return coords_; }
  const SparseCoord& operator[](std::int64_t i) const { return coords_[static_cast<std::size_t>(i)]; }

  /// Row of a coordinate, or -1 when absent or outside the grid.
  std::int64_t find(int b, std::int64_t x, std::int64_t y, std::int64_t z) const;
  /// Rows belonging to each batch item.
  std::vector<int> batch_of_rows() const;

  static bool coord_less(const SparseCoord& a, const SparseCoord& b);

 private:
  int batch_size_;
  std::int64_t grid_edge_;
  std::vector<SparseCoord> coords_;
  std::vector<std::int32_t> dense_lookup_;                // used for small grids
  std::unordered_map<std::uint64_t, std::int32_t> hash_;  // otherwise
};

using CoordSetPtr = std::shared_ptr<const CoordSet>;

struct SparseVar {
  CoordSetPtr coords;
  Var features;  // [N, C]
};

/// Per kernel offset, the (input row, output row) pairs for a stride-1
/// convolution on one coordinate set. Offsets are indexed x-fastest over
/// [-r, r]^3 with r = (k - 1) / 2.
struct KernelMap {
  int kernel = 1;
  std::vector<std::vector<std::pair<std::int32_t, std::int32_t>>> pairs;
};

KernelMap build_kernel_map(const CoordSet& coords, int kernel);

/// out[u] = bias + sum_o W[o]^T x[u + o] over neighbours present in the set.
/// W has shape [k^3, Cin, Cout]; an invalid `bias` Var means no bias.
SparseVar sparse_conv3(Tape& t, const SparseVar& x, Var weight, Var bias, const KernelMap& map);
SparseVar sparse_conv3(Tape& t, const SparseVar& x, Var weight, Var bias, int kernel);

/// Kernel 2, stride 2 transposed convolution that creates all eight children
/// 2u + o of every input coordinate. W has shape [8, Cin, Cout], offsets
/// indexed ox + 2 * (oy + 2 * oz).
SparseVar sparse_transpose_conv3_generative(Tape& t, const SparseVar& x, Var weight, Var bias);

/// Per-channel statistics computed by a normalization in training mode.
struct NormStats {
  std::vector<double> mean;      // per group x channel
  std::vector<double> variance;  // biased
};

/// (x - mean) / sqrt(var + eps) * gamma + beta with statistics taken over the
/// rows of each group (all rows in one group: batch norm; one group per
/// sample: instance norm). Throws on zero rows.
Var normalize_rows(Tape& t, Var x, const std::vector<int>& group_of_row, int n_groups, Var gamma, Var beta,
                   double eps, NormStats* stats = nullptr);
/// Same affine map with fixed (running) statistics, used in evaluation mode.
Var normalize_rows_fixed(Tape& t, Var x, const std::vector<double>& mean, const std::vector<double>& variance,
                         Var gamma, Var beta, double eps);

/// Row-wise softmax with max subtraction.
Var softmax_rows(Tape& t, Var x);

SparseVar sparse_relu(Tape& t, const SparseVar& x);
SparseVar sparse_softmax(Tape& t, const SparseVar& x);

/// Keeps the rows whose mask entry is true; dropped rows get zero gradient.
SparseVar prune(Tape& t, const SparseVar& x, const std::vector<bool>& mask);

/// Dense [B, G, G, G, C] field from `current` (on grid G) plus coarser
/// memorized sets, each memorized row replicated over its 2^(3k) block. The
/// union must tile the grid exactly once.
Var reconstruct_dense(Tape& t, const SparseVar& current, const std::vector<SparseVar>& memorized);

}  // namespace octsr
