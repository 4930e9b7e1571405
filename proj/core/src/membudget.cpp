// SPDX-License-Identifier: Apache-2.0
#include "octsr/membudget.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "octsr/config_io.hpp"
#include "octsr/error.hpp"

namespace octsr {

using nlohmann::json;

std::int64_t expected_params(const LayerSpec& l) {
  const std::int64_t k = l.kernel;
  if (l.kind == "conv3d") return k * k * k * l.in_channels * l.channels + l.channels;
  if (l.kind == "conv_transpose3d") return k * k * k * l.in_channels * l.channels + l.channels;
  if (l.kind == "instance_norm3d" || l.kind == "batch_norm3d") return 2 * l.channels;
  if (l.kind == "softmax" || l.kind == "prune") return 0;
  throw ShapeError("unknown layer kind '" + l.kind + "'");
}

void validate_architecture(std::span<const LayerSpec> arch) {
  std::vector<std::string> problems;
  int prev_stage = 1;
  for (const auto& l : arch) {
    try {
      const std::int64_t want = expected_params(l);
      if (want != l.params)
        problems.push_back(l.name + ": " + std::to_string(l.params) + " parameters, shape implies " +
                           std::to_string(want));
    } catch (const ShapeError& e) {
      problems.push_back(l.name + ": " + e.what());
    }
    if (l.channels <= 0 || l.edge <= 0) problems.push_back(l.name + ": output shape must be positive");
    if (l.stage < prev_stage) problems.push_back(l.name + ": stages must be non-decreasing");
    prev_stage = l.stage;
  }
  if (!problems.empty()) {
    std::string msg = "invalid architecture:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ShapeError(msg);
  }
}

namespace {

LayerSpec conv(std::string name, int stage, std::int64_t cin, std::int64_t cout, std::int64_t edge, int k,
               bool sparse, std::string kind = "conv3d") {
  LayerSpec l{std::move(name), std::move(kind), stage, cin, cout, edge, k, 0, sparse};
  l.params = expected_params(l);
  return l;
}

LayerSpec norm(std::string name, std::string kind, int stage, std::int64_t c, std::int64_t edge, bool sparse) {
  LayerSpec l{std::move(name), std::move(kind), stage, c, c, edge, 0, 2 * c, sparse};
  return l;
}

LayerSpec zero_param(std::string name, std::string kind, int stage, std::int64_t c, std::int64_t edge) {
  return LayerSpec{std::move(name), std::move(kind), stage, c, c, edge, 0, 0, true};
}

}  // namespace

std::vector<LayerSpec> generator_architecture(const GeneratorConfig& cfg) {
  cfg.validate();
  std::vector<LayerSpec> a;
  const std::int64_t cls = cfg.class_channels();
  for (int s = 1; s <= cfg.stages; ++s) {
    const std::int64_t e = cfg.stage_edge(s);
    const std::int64_t w = cfg.widths[static_cast<std::size_t>(s - 1)];
    const std::string p = "s" + std::to_string(s) + ".";
    if (s == 1) {
      a.push_back(conv(p + "conv0", s, cfg.input_channels(), w, e, cfg.first_kernel, false));
      a.push_back(norm(p + "norm0", "instance_norm3d", s, w, e, false));
      a.push_back(conv(p + "conv1", s, w, w, e, cfg.conv_kernel, false));
      a.push_back(norm(p + "norm1", "instance_norm3d", s, w, e, false));
      a.push_back(conv(p + "conv2", s, w, w, e, cfg.conv_kernel, true));
      a.push_back(norm(p + "norm2", "batch_norm3d", s, w, e, true));
    } else {
      const std::int64_t prev = cfg.widths[static_cast<std::size_t>(s - 2)];
      a.push_back(conv(p + "up", s, prev, prev, e, 2, true, "conv_transpose3d"));
      a.push_back(norm(p + "norm0", "batch_norm3d", s, prev, e, true));
      a.push_back(conv(p + "conv1", s, prev, w, e, cfg.conv_kernel, true));
      a.push_back(norm(p + "norm1", "batch_norm3d", s, w, e, true));
      a.push_back(conv(p + "conv2", s, w, w, e, cfg.conv_kernel, true));
      a.push_back(norm(p + "norm2", "batch_norm3d", s, w, e, true));
    }
    a.push_back(conv(p + "cls", s, w, cls, e, 1, true));
    a.push_back(zero_param(p + "softmax", "softmax", s, cls, e));
    if (s < cfg.stages) a.push_back(zero_param(p + "prune", "prune", s, w, e));
  }
  return a;
}

std::vector<LayerSpec> dense_generator_architecture(const GeneratorConfig& cfg) {
  std::vector<LayerSpec> a;
  for (auto& l : generator_architecture(cfg)) {
    if (l.kind == "softmax" || l.kind == "prune" || l.name.ends_with(".cls")) continue;
    l.sparse = true;
    a.push_back(std::move(l));
  }
  const int last = cfg.stages;
  const std::int64_t w = cfg.widths.back();
  a.push_back(conv("s" + std::to_string(last) + ".head", last, w, cfg.class_channels(), cfg.output_edge(), 1, true));
  return a;
}

std::vector<LayerSpec> parse_architecture(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError({std::string("architecture is not valid JSON: ") + e.what()});
  }
  if (!doc.is_object() || !doc.contains("layers") || !doc["layers"].is_array())
    throw ConfigError({"architecture must be an object with a \"layers\" array"});
  std::vector<std::string> problems;
  std::vector<LayerSpec> arch;
  int index = 0;
  for (const auto& row : doc["layers"]) {
    const std::string where = "layers[" + std::to_string(index++) + "]";
    LayerSpec l;
    auto field = [&](const char* key, auto& out, bool required) {
      if (!row.contains(key)) {
        if (required) problems.push_back(where + "." + key + ": missing");
        return;
      }
      try {
        row.at(key).get_to(out);
      } catch (const json::exception&) {
        problems.push_back(where + "." + key + ": wrong type");
      }
    };
    if (!row.is_object()) {
      problems.push_back(where + ": must be an object");
      continue;
    }
    field("name", l.name, true);
    field("kind", l.kind, true);
    field("stage", l.stage, true);
    field("in_channels", l.in_channels, false);
    field("channels", l.channels, true);
    field("edge", l.edge, true);
    field("kernel", l.kernel, false);
    field("params", l.params, true);
    field("sparse", l.sparse, false);
    for (const auto& [key, _] : row.items())
      if (key != "name" && key != "kind" && key != "stage" && key != "in_channels" && key != "channels" &&
          key != "edge" && key != "kernel" && key != "params" && key != "sparse")
        problems.push_back(where + "." + key + ": unknown key");
    arch.push_back(std::move(l));
  }
  if (!problems.empty()) throw ConfigError(problems);
  validate_architecture(arch);
  return arch;
}

std::vector<LayerSpec> load_architecture(const std::filesystem::path& path) {
  return parse_architecture(read_text_file(path));
}

std::string architecture_json(std::span<const LayerSpec> arch) {
  json layers = json::array();
  for (const auto& l : arch)
    layers.push_back({{"name", l.name},
                      {"kind", l.kind},
                      {"stage", l.stage},
                      {"in_channels", l.in_channels},
                      {"channels", l.channels},
                      {"edge", l.edge},
                      {"kernel", l.kernel},
                      {"params", l.params},
                      {"sparse", l.sparse}});
  return json{{"layers", layers}}.dump(2) + "\n";
}

int MemoryLedger::stage_count() const {
  int n = 0;
  for (const auto& r : rows) n = std::max(n, r.stage);
  return n;
}

std::vector<double> MemoryLedger::stage_peaks() const {
  std::vector<double> peaks(static_cast<std::size_t>(stage_count()), 0.0);
  for (const auto& r : rows) peaks[static_cast<std::size_t>(r.stage - 1)] = r.cumulative_gb;
  // Stages without layers inherit the previous peak.
  for (std::size_t s = 1; s < peaks.size(); ++s) peaks[s] = std::max(peaks[s], peaks[s - 1]);
  return peaks;
}

double MemoryLedger::activation_bytes() const {
  double b = 0.0;
  for (const auto& r : rows) b += r.activation_bytes;
  return b;
}

double MemoryLedger::param_bytes() const {
  double b = 0.0;
  for (const auto& r : rows) b += r.param_bytes;
  return b;
}

namespace {

MemoryLedger build_ledger(std::span<const LayerSpec> arch, std::span<const double> occupancy, double bpe) {
  if (!(bpe > 0.0)) throw ShapeError("bytes per element must be positive");
  MemoryLedger ledger;
  ledger.bytes_per_element = bpe;
  double cumulative = 0.0;
  for (const auto& l : arch) {
    if (l.stage < 1) throw ShapeError(l.name + ": stage must be at least 1");
    double act = static_cast<double>(l.activations());
    if (!occupancy.empty() && l.sparse) {
      if (static_cast<std::size_t>(l.stage) > occupancy.size())
        throw ShapeError("no occupancy given for stage " + std::to_string(l.stage));
      act *= occupancy[static_cast<std::size_t>(l.stage - 1)];
    }
    LedgerRow r;
    r.name = l.name;
    r.stage = l.stage;
    r.activation_elements = act;
    r.params = l.params;
    r.activation_bytes = 2.0 * act * bpe;
    r.param_bytes = 3.0 * static_cast<double>(l.params) * bpe;
    r.incremental_gb = (r.activation_bytes + r.param_bytes) / kBytesPerGB;
    cumulative += r.incremental_gb;
    r.cumulative_gb = cumulative;
    ledger.rows.push_back(std::move(r));
  }
  return ledger;
}

}  // namespace

MemoryLedger estimate_dense_memory(std::span<const LayerSpec> arch, double bytes_per_element) {
  return build_ledger(arch, {}, bytes_per_element);
}

MemoryLedger estimate_octree_memory(std::span<const LayerSpec> arch, std::span<const double> occupancy,
                                    double bytes_per_element) {
  for (std::size_t i = 0; i < occupancy.size(); ++i)
    if (!(occupancy[i] >= 0.0 && occupancy[i] <= 1.0))
      throw ShapeError("occupancy of stage " + std::to_string(i + 1) + " is " + std::to_string(occupancy[i]) +
                       ", outside [0, 1]");
  if (occupancy.empty()) throw ShapeError("octree estimate needs at least one occupancy value");
  return build_ledger(arch, occupancy, bytes_per_element);
}

std::vector<double> occupancy_from_counts(std::span<const StageCounts> counts, std::int64_t first_grid_edge) {
  std::vector<double> occ;
  std::int64_t edge = first_grid_edge;
  for (const auto& c : counts) {
    const double cells = static_cast<double>(edge) * static_cast<double>(edge) * static_cast<double>(edge);
    const double active = static_cast<double>(c.dense + c.mixed);
    if (c.dense < 0 || c.mixed < 0 || active > cells)
      throw ShapeError("node counts at grid edge " + std::to_string(edge) + " exceed the grid");
    occ.push_back(active / cells);
    edge *= 2;
  }
  return occ;
}

std::vector<StageCounts> load_stage_counts_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty node-count table");
  std::vector<std::string> header;
  {
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
  }
  int dense_col = -1, mixed_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "dense") dense_col = static_cast<int>(i);
    if (header[i] == "mixed") mixed_col = static_cast<int>(i);
  }
  if (dense_col < 0 || mixed_col < 0) throw FormatError(path.string() + ": needs 'dense' and 'mixed' columns");
  std::vector<StageCounts> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() < header.size()) throw FormatError(path.string() + ": short row '" + line + "'");
    try {
      out.push_back({std::stoll(cells[static_cast<std::size_t>(dense_col)]),
                     std::stoll(cells[static_cast<std::size_t>(mixed_col)])});
    } catch (const std::exception&) {
      throw FormatError(path.string() + ": non-numeric count in '" + line + "'");
    }
  }
  return out;
}

std::vector<StageComparison> compare_report(const MemoryLedger& dense, const MemoryLedger& octree, double budget_gb) {
  const auto dp = dense.stage_peaks();
  const auto op = octree.stage_peaks();
  if (dp.size() != op.size())
    throw ShapeError("dense ledger has " + std::to_string(dp.size()) + " stages, octree ledger has " +
                     std::to_string(op.size()));
  std::vector<StageComparison> rows;
  for (std::size_t i = 0; i < dp.size(); ++i) {
    StageComparison c;
    c.stage = static_cast<int>(i) + 1;
    c.dense_gb = dp[i];
    c.octree_gb = op[i];
    c.ratio = dp[i] > 0.0 ? op[i] / dp[i] : 1.0;
    c.dense_oom = dp[i] > budget_gb;
    c.octree_oom = op[i] > budget_gb;
    rows.push_back(c);
  }
  return rows;
}

int first_oom_stage(std::span<const StageComparison> report, bool octree) {
  for (const auto& c : report)
    if (octree ? c.octree_oom : c.dense_oom) return c.stage;
  return 0;
}

void write_ledger_csv(std::ostream& os, const MemoryLedger& ledger) {
  os << "layer,stage,activation_elements,params,activation_bytes,param_bytes,incremental_gb,cumulative_gb\n";
  char buf[512];
  for (const auto& r : ledger.rows) {
    std::snprintf(buf, sizeof buf, "%s,%d,%.1f,%lld,%.1f,%.1f,%.6f,%.6f\n", r.name.c_str(), r.stage,
                  r.activation_elements, static_cast<long long>(r.params), r.activation_bytes, r.param_bytes,
                  r.incremental_gb, r.cumulative_gb);
    os << buf;
  }
}

void write_comparison_csv(std::ostream& os, std::span<const StageComparison> report) {
  os << "stage,dense_gb,octree_gb,ratio,dense_oom,octree_oom\n";
  char buf[256];
  for (const auto& c : report) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%d,%d\n", c.stage, c.dense_gb, c.octree_gb, c.ratio,
                  c.dense_oom ? 1 : 0, c.octree_oom ? 1 : 0);
    os << buf;
  }
}

void write_comparison_text(std::ostream& os, std::span<const StageComparison> report, double budget_gb) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-6s %12s %12s %8s  budget %.1f GB\n", "stage", "dense GB", "octree GB", "ratio",
                budget_gb);
  os << buf;
  for (const auto& c : report) {
    std::snprintf(buf, sizeof buf, "%-6d %12.3f %12.3f %8.4f%s%s\n", c.stage, c.dense_gb, c.octree_gb, c.ratio,
                  c.dense_oom ? "  dense OOM" : "", c.octree_oom ? "  octree OOM" : "");
    os << buf;
  }
}

}  // namespace octsr
