// SPDX-License-Identifier: Apache-2.0
//
// Octree over a cubic label volume. Cells that hold a single phase become
// Dense leaves; cells with two or more phases are Mixed and subdivide into
// eight octants until the deepest level, where any still-mixed cell keeps its
// voxels verbatim.
//
// Nodes store their coordinate on the grid of their own level. A level-l grid
// has root_grid * 2^l cells per axis.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "octsr/volume.hpp"

namespace octsr {

using NodeCoord = std::array<std::int32_t, 3>;

enum class NodeClass : std::uint8_t { Dense = 0, Mixed = 1 };

struct OctreeNode {
  NodeCoord coord{};
  NodeClass cls = NodeClass::Dense;
  std::uint8_t phase = 0;  // meaningful for Dense nodes only
};

class Octree {
 public:
  const Dims3& dims() const { return dims_; }
  int n_classes() const { return n_classes_; }
  int root_grid() const { return root_grid_; }
  int max_level() const { return max_level_; }
  int level_count() const { return static_cast<int>(levels_.size()); }
  /// Cube edge of a level-l cell in voxels.
  std::int64_t cell_edge(int level) const;
  /// Cells per axis on the level-l grid.
  std::int64_t grid_edge(int level) const;

  /// Nodes of one level, sorted by (z, y, x).
  const std::vector<OctreeNode>& level(int l) const { return levels_.at(static_cast<std::size_t>(l)); }
  /// Voxels of the still-mixed cells at the deepest level, cell after cell in
  /// the order those cells appear in level(max_level()), x-fastest within a cell.
  const std::vector<std::uint8_t>& leaf_payload() const { return payload_; }

 private:
  friend Octree build_octree(const LabelVolume& v, int max_levels, int root_grid);

  Dims3 dims_;
  int n_classes_ = 0;
  int root_grid_ = 1;
  int max_level_ = 0;
  std::vector<std::vector<OctreeNode>> levels_;
  std::vector<std::uint8_t> payload_;
};

/// Top-down build. The volume must be a cube whose edge equals
/// root_grid * 2^max_levels * leaf_size for some integer leaf_size >= 1, with
/// edge / root_grid a power of two.
Octree build_octree(const LabelVolume& v, int max_levels, int root_grid = 1);

/// Inverse of build_octree, bit-exact.
LabelVolume reconstruct_dense(const Octree& tree);

struct LevelStats {
  int level = 0;
  std::int64_t grid_edge = 0;
  std::int64_t total_equivalent_voxels = 0;  // grid_edge^3
  std::int64_t dense_count = 0;
  std::int64_t mixed_count = 0;
  double mixed_percent = 0.0;  // mixed / total_equivalent * 100
};

std::vector<LevelStats> level_stats(const Octree& tree);

/// Statistics for stagewise node sets, e.g. generator output counts.
/// Level l's grid edge is first_grid_edge * 2^l.
struct StageCounts {
  std::int64_t dense = 0;
  std::int64_t mixed = 0;
};
std::vector<LevelStats> level_stats(std::span<const StageCounts> counts, std::int64_t first_grid_edge);

/// dense(l) + mixed(l) == 8 * mixed(l-1) for every l >= 1.
bool satisfies_node_conservation(std::span<const LevelStats> stats);

/// Columns mirror the usual stage table: stage, output size, standard voxels,
/// dense nodes, mixed nodes, mixed percentage.
void write_level_stats_csv(std::ostream& os, std::span<const LevelStats> stats);

// ---------------------------------------------------------------------------
// Stagewise node sets

/// Nodes living on a grid of `grid_edge` cells per axis, each with a feature
/// row (a probability vector, or a one-hot for ground truth).
struct NodeSet {
  std::int64_t grid_edge = 0;
  int channels = 0;
  std::vector<NodeCoord> coords;
  std::vector<double> features;  // coords.size() x channels

  std::size_t size() const { return coords.size(); }
};

/// Per-stage sets of nodes that were classified dense and left the pipeline.
using MemorizedNodes = std::vector<NodeSet>;

/// Dense field at current.grid_edge. Memorized nodes from coarser grids are
/// replicated over their block; the union must tile the grid exactly once.
/// Throws listing offending cells on a gap or an overlap.
FeatureField reconstruct_dense(const NodeSet& current, std::span<const NodeSet> memorized);

/// For each cell of a target grid, the index (into the concatenation of the
/// given sets) of the node covering it. Throws on gap or overlap.
std::vector<std::int64_t> tiling_index(std::span<const NodeSet* const> sets, std::int64_t target_grid_edge);

/// Dense leaves of every level as one-hot node sets, plus (when the leaf cells
/// are larger than a voxel) a final set at voxel resolution holding the
/// payload of still-mixed leaves.
std::vector<NodeSet> octree_node_sets(const Octree& tree);

// SVOX container: "SVOX", u32 version, u32 stage count, u32 channels, then per
// stage: u64 grid edge, u64 node count, nodes as (x, y, z) i32 + channels f32.
inline constexpr std::uint32_t kSvoxVersion = 1;
void save_svox(const std::filesystem::path& path, std::span<const NodeSet> stages);
std::vector<NodeSet> load_svox(const std::filesystem::path& path);

}  // namespace octsr
