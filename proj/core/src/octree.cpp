// SPDX-License-Identifier: Apache-2.0
#include "octsr/octree.hpp"

#include <algorithm>
#include <cstdio>
#include <optional>
#include <fstream>
#include <ostream>
#include <sstream>

#include "octsr/binio.hpp"
#include "octsr/error.hpp"

namespace octsr {

namespace {

bool is_pow2(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

bool zyx_less(const NodeCoord& a, const NodeCoord& b) {
  if (a[2] != b[2]) return a[2] < b[2];
  if (a[1] != b[1]) return a[1] < b[1];
  return a[0] < b[0];
}

std::string coord_string(const NodeCoord& c) {
  return "(" + std::to_string(c[0]) + "," + std::to_string(c[1]) + "," + std::to_string(c[2]) + ")";
}

// Returns the phase when the cell is uniform.
std::optional<std::uint8_t> uniform_phase(const LabelVolume& v, const NodeCoord& c, std::int64_t edge) {
  const std::int64_t x0 = c[0] * edge, y0 = c[1] * edge, z0 = c[2] * edge;
  const std::uint8_t first = v.at(x0, y0, z0);
  for (std::int64_t z = z0; z < z0 + edge; ++z)
    for (std::int64_t y = y0; y < y0 + edge; ++y)
      for (std::int64_t x = x0; x < x0 + edge; ++x)
        if (v.at(x, y, z) != first) return std::nullopt;
  return first;
}

}  // namespace

std::int64_t Octree::cell_edge(int level) const { return dims_.nx / grid_edge(level); }

std::int64_t Octree::grid_edge(int level) const {
  return static_cast<std::int64_t>(root_grid_) << level;
}

Octree build_octree(const LabelVolume& v, int max_levels, int root_grid) {
  const Dims3& d = v.dims();
  if (!d.is_cube()) throw ShapeError("octree needs a cubic volume, got " + to_string(d));
  if (max_levels < 0 || root_grid < 1) throw ShapeError("octree needs max_levels >= 0 and root_grid >= 1");
  if (d.nx % root_grid != 0 || !is_pow2(d.nx / root_grid))
    throw ShapeError("volume edge " + std::to_string(d.nx) + " is not root_grid " + std::to_string(root_grid) +
                     " times a power of two");
  const std::int64_t finest_grid = static_cast<std::int64_t>(root_grid) << max_levels;
  if (d.nx % finest_grid != 0)
    throw ShapeError("volume edge " + std::to_string(d.nx) + " is too small for " +
                     std::to_string(max_levels) + " levels below a " + std::to_string(root_grid) + "^3 root grid");

  Octree t;
  t.dims_ = d;
  t.n_classes_ = v.n_classes();
  t.root_grid_ = root_grid;
  t.max_level_ = max_levels;

  std::vector<NodeCoord> cells;
  for (int z = 0; z < root_grid; ++z)
    for (int y = 0; y < root_grid; ++y)
      for (int x = 0; x < root_grid; ++x) cells.push_back({x, y, z});

  for (int level = 0; level <= max_levels; ++level) {
    const std::int64_t edge = t.cell_edge(level);
    std::vector<OctreeNode> nodes;
    nodes.reserve(cells.size());
    std::vector<NodeCoord> next;
    for (const auto& c : cells) {
      OctreeNode n;
      n.coord = c;
      if (auto p = uniform_phase(v, c, edge)) {
        n.cls = NodeClass::Dense;
        n.phase = *p;
      } else {
        n.cls = NodeClass::Mixed;
        if (level < max_levels) {
          for (int o = 0; o < 8; ++o)
            next.push_back({2 * c[0] + (o & 1), 2 * c[1] + ((o >> 1) & 1), 2 * c[2] + ((o >> 2) & 1)});
        }
      }
      nodes.push_back(n);
    }
    if (level == max_levels) {
      for (const auto& n : nodes) {
        if (n.cls != NodeClass::Mixed) continue;
        for (std::int64_t z = 0; z < edge; ++z)
          for (std::int64_t y = 0; y < edge; ++y)
            for (std::int64_t x = 0; x < edge; ++x)
              t.payload_.push_back(v.at(n.coord[0] * edge + x, n.coord[1] * edge + y, n.coord[2] * edge + z));
      }
    }
    t.levels_.push_back(std::move(nodes));
    std::sort(next.begin(), next.end(), zyx_less);
    cells = std::move(next);
  }
  return t;
}

LabelVolume reconstruct_dense(const Octree& tree) {
  const Dims3& d = tree.dims();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(d.count()));
  std::size_t payload_at = 0;
  for (int l = 0; l < tree.level_count(); ++l) {
    const std::int64_t edge = tree.cell_edge(l);
    for (const auto& n : tree.level(l)) {
      const std::int64_t x0 = n.coord[0] * edge, y0 = n.coord[1] * edge, z0 = n.coord[2] * edge;
      if (n.cls == NodeClass::Dense) {
        for (std::int64_t z = z0; z < z0 + edge; ++z)
          for (std::int64_t y = y0; y < y0 + edge; ++y)
            for (std::int64_t x = x0; x < x0 + edge; ++x) out[static_cast<std::size_t>(d.index(x, y, z))] = n.phase;
      } else if (l == tree.max_level()) {
        for (std::int64_t z = z0; z < z0 + edge; ++z)
          for (std::int64_t y = y0; y < y0 + edge; ++y)
            for (std::int64_t x = x0; x < x0 + edge; ++x)
              out[static_cast<std::size_t>(d.index(x, y, z))] = tree.leaf_payload().at(payload_at++);
      }
    }
  }
  return LabelVolume(d, tree.n_classes(), std::move(out));
}

std::vector<LevelStats> level_stats(const Octree& tree) {
  std::vector<StageCounts> counts;
  for (int l = 0; l < tree.level_count(); ++l) {
    StageCounts c;
    for (const auto& n : tree.level(l)) (n.cls == NodeClass::Dense ? c.dense : c.mixed) += 1;
    counts.push_back(c);
  }
  return level_stats(counts, tree.root_grid());
}

std::vector<LevelStats> level_stats(std::span<const StageCounts> counts, std::int64_t first_grid_edge) {
  std::vector<LevelStats> out;
  for (std::size_t l = 0; l < counts.size(); ++l) {
    LevelStats s;
    s.level = static_cast<int>(l);
    s.grid_edge = first_grid_edge << l;
    s.total_equivalent_voxels = s.grid_edge * s.grid_edge * s.grid_edge;
    s.dense_count = counts[l].dense;
    s.mixed_count = counts[l].mixed;
    s.mixed_percent = 100.0 * static_cast<double>(s.mixed_count) / static_cast<double>(s.total_equivalent_voxels);
    out.push_back(s);
  }
  return out;
}

bool satisfies_node_conservation(std::span<const LevelStats> stats) {
  for (std::size_t l = 1; l < stats.size(); ++l)
    if (stats[l].dense_count + stats[l].mixed_count != 8 * stats[l - 1].mixed_count) return false;
  return true;
}

void write_level_stats_csv(std::ostream& os, std::span<const LevelStats> stats) {
  os << "stage,output_size,total_standard_voxels,dense_nodes,mixed_nodes,mixed_percent\n";
  for (const auto& s : stats) {
    char pct[32];
    std::snprintf(pct, sizeof pct, "%.1f", s.mixed_percent);
    os << (s.level + 1) << "," << s.grid_edge << "^3," << s.total_equivalent_voxels << "," << s.dense_count << ","
       << s.mixed_count << "," << pct << "\n";
  }
}

// ---------------------------------------------------------------------------

std::vector<std::int64_t> tiling_index(std::span<const NodeSet* const> sets, std::int64_t target) {
  if (target <= 0) throw ShapeError("target grid edge must be positive");
  const std::int64_t cells = target * target * target;
  std::vector<std::int64_t> owner(static_cast<std::size_t>(cells), -1);
  std::vector<std::string> overlaps;
  std::int64_t base = 0;
  for (const NodeSet* set : sets) {
    if (set->grid_edge <= 0 || target % set->grid_edge != 0 || !is_pow2(target / set->grid_edge))
      throw ShapeError("node set grid " + std::to_string(set->grid_edge) + " does not nest in target grid " +
                       std::to_string(target));
    const std::int64_t f = target / set->grid_edge;
    for (std::size_t i = 0; i < set->coords.size(); ++i) {
      const auto& c = set->coords[i];
      if (c[0] < 0 || c[1] < 0 || c[2] < 0 || c[0] >= set->grid_edge || c[1] >= set->grid_edge ||
          c[2] >= set->grid_edge)
        throw ShapeError("node " + coord_string(c) + " lies outside its " + std::to_string(set->grid_edge) + "^3 grid");
      for (std::int64_t z = c[2] * f; z < (c[2] + 1) * f; ++z)
        for (std::int64_t y = c[1] * f; y < (c[1] + 1) * f; ++y)
          for (std::int64_t x = c[0] * f; x < (c[0] + 1) * f; ++x) {
            auto& o = owner[static_cast<std::size_t>(x + target * (y + target * z))];
            if (o != -1) {
              if (overlaps.size() < 8)
                overlaps.push_back(coord_string({static_cast<int>(x), static_cast<int>(y), static_cast<int>(z)}));
            }
            o = base + static_cast<std::int64_t>(i);
          }
    }
    base += static_cast<std::int64_t>(set->coords.size());
  }
  std::vector<std::string> gaps;
  std::int64_t gap_count = 0;
  for (std::int64_t i = 0; i < cells; ++i) {
    if (owner[static_cast<std::size_t>(i)] != -1) continue;
    ++gap_count;
    if (gaps.size() < 8)
      gaps.push_back(coord_string({static_cast<int>(i % target), static_cast<int>((i / target) % target),
                                   static_cast<int>(i / (target * target))}));
  }
  if (!overlaps.empty() || gap_count > 0) {
    std::ostringstream msg;
    msg << "node sets do not tile the " << target << "^3 grid:";
    if (!overlaps.empty()) {
      msg << " overlap at";
      for (const auto& s : overlaps) msg << " " << s;
    }
    if (gap_count > 0) {
      msg << " " << gap_count << " uncovered cells, e.g.";
      for (const auto& s : gaps) msg << " " << s;
    }
    throw ShapeError(msg.str());
  }
  return owner;
}

FeatureField reconstruct_dense(const NodeSet& current, std::span<const NodeSet> memorized) {
  std::vector<const NodeSet*> sets;
  for (const auto& m : memorized) sets.push_back(&m);
  sets.push_back(&current);
  const int c = current.channels;
  for (const NodeSet* s : sets)
    if (s->channels != c || s->features.size() != s->coords.size() * static_cast<std::size_t>(c))
      throw ShapeError("node sets disagree on channel count");
  const auto owner = tiling_index(sets, current.grid_edge);
  std::vector<const double*> rows;
  for (const NodeSet* s : sets)
    for (std::size_t i = 0; i < s->size(); ++i) rows.push_back(s->features.data() + i * static_cast<std::size_t>(c));
  const std::int64_t g = current.grid_edge;
  std::vector<double> data(owner.size() * static_cast<std::size_t>(c));
  for (std::size_t v = 0; v < owner.size(); ++v)
    std::copy_n(rows[static_cast<std::size_t>(owner[v])], c, data.begin() + static_cast<std::ptrdiff_t>(v * c));
  return FeatureField(Dims3{g, g, g}, c, std::move(data));
}

std::vector<NodeSet> octree_node_sets(const Octree& tree) {
  const int c = tree.n_classes();
  std::vector<NodeSet> out;
  for (int l = 0; l < tree.level_count(); ++l) {
    NodeSet s;
    s.grid_edge = tree.grid_edge(l);
    s.channels = c;
    for (const auto& n : tree.level(l)) {
      if (n.cls != NodeClass::Dense) continue;
      s.coords.push_back(n.coord);
      for (int k = 0; k < c; ++k) s.features.push_back(k == n.phase ? 1.0 : 0.0);
    }
    out.push_back(std::move(s));
  }
  const std::int64_t edge = tree.cell_edge(tree.max_level());
  if (edge > 1) {
    NodeSet s;
    s.grid_edge = tree.dims().nx;
    s.channels = c;
    std::size_t at = 0;
    for (const auto& n : tree.level(tree.max_level())) {
      if (n.cls != NodeClass::Mixed) continue;
      for (std::int64_t z = 0; z < edge; ++z)
        for (std::int64_t y = 0; y < edge; ++y)
          for (std::int64_t x = 0; x < edge; ++x) {
            s.coords.push_back({static_cast<std::int32_t>(n.coord[0] * edge + x),
                                static_cast<std::int32_t>(n.coord[1] * edge + y),
                                static_cast<std::int32_t>(n.coord[2] * edge + z)});
            const auto p = tree.leaf_payload().at(at++);
            for (int k = 0; k < c; ++k) s.features.push_back(k == p ? 1.0 : 0.0);
          }
    }
    out.push_back(std::move(s));
  }
  return out;
}

void save_svox(const std::filesystem::path& path, std::span<const NodeSet> stages) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  const int c = stages.empty() ? 0 : stages.front().channels;
  for (const auto& s : stages)
    if (s.channels != c) throw ShapeError("SVOX stages must share a channel count");
  binio::put_bytes(os, "SVOX", 4);
  binio::put<std::uint32_t>(os, kSvoxVersion);
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(stages.size()));
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(c));
  for (const auto& s : stages) {
    binio::put<std::uint64_t>(os, static_cast<std::uint64_t>(s.grid_edge));
    binio::put<std::uint64_t>(os, s.coords.size());
    for (std::size_t i = 0; i < s.coords.size(); ++i) {
      for (int a = 0; a < 3; ++a) binio::put<std::int32_t>(os, s.coords[i][static_cast<std::size_t>(a)]);
      for (int k = 0; k < c; ++k)
        binio::put<float>(os, static_cast<float>(s.features[i * static_cast<std::size_t>(c) + static_cast<std::size_t>(k)]));
    }
  }
  if (!os) throw Error("write failed: " + path.string());
}

std::vector<NodeSet> load_svox(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  binio::expect_magic(is, "SVOX");
  const auto version = binio::get<std::uint32_t>(is);
  if (version != kSvoxVersion) throw FormatError("unsupported SVOX version " + std::to_string(version));
  const auto n_stages = binio::get<std::uint32_t>(is);
  const auto c = binio::get<std::uint32_t>(is);
  if (c > 4096) throw FormatError("implausible SVOX channel count");
  std::vector<NodeSet> out;
  for (std::uint32_t s = 0; s < n_stages; ++s) {
    NodeSet set;
    set.grid_edge = static_cast<std::int64_t>(binio::get<std::uint64_t>(is));
    set.channels = static_cast<int>(c);
    const auto n = binio::get<std::uint64_t>(is);
    if (n > (std::uint64_t{1} << 40)) throw FormatError("implausible SVOX node count");
    for (std::uint64_t i = 0; i < n; ++i) {
      NodeCoord co;
      for (auto& a : co) a = binio::get<std::int32_t>(is);
      set.coords.push_back(co);
      for (std::uint32_t k = 0; k < c; ++k) set.features.push_back(binio::get<float>(is));
    }
    out.push_back(std::move(set));
  }
  return out;
}

}  // namespace octsr
