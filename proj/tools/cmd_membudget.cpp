// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>

#include "commands.hpp"
#include "octsr/membudget.hpp"
#include "run_manifest.hpp"

namespace octsr::cli {

namespace fs = std::filesystem;

namespace {

struct MembudgetOptions {
  std::string arch;
  std::string occupancy;
  std::string out;
  double budget_gb = 80.0;
  double bytes_per_element = 2.0;
};

std::vector<LayerSpec> resolve_arch(const std::string& arch, RunManifest& manifest) {
  if (arch == "reference") return dense_generator_architecture(GeneratorConfig::reference());
  if (arch == "reference-octree") return generator_architecture(GeneratorConfig::reference());
  require_file(arch, "--arch");
  manifest.add_input(arch);
  return load_architecture(arch);
}

void run_membudget(const MembudgetOptions& o, const Globals& g) {
  RunManifest manifest("membudget");
  const auto arch = resolve_arch(o.arch, manifest);
  validate_architecture(arch);
  const MemoryLedger dense = estimate_dense_memory(arch, o.bytes_per_element);
  std::vector<double> occ(static_cast<std::size_t>(dense.stage_count()), 1.0);
  if (!o.occupancy.empty()) {
    require_file(o.occupancy, "--occupancy");
    manifest.add_input(o.occupancy);
    std::int64_t first_edge = 0;
    for (const auto& l : arch)
      if (l.stage == 1 && first_edge == 0) first_edge = l.edge;
    occ = occupancy_from_counts(load_stage_counts_csv(o.occupancy), first_edge);
    if (occ.size() < static_cast<std::size_t>(dense.stage_count()))
      throw ShapeError("--occupancy lists " + std::to_string(occ.size()) + " stages but the architecture has " +
                       std::to_string(dense.stage_count()));
  }
  const MemoryLedger octree = estimate_octree_memory(arch, occ, o.bytes_per_element);
  const auto report = compare_report(dense, octree, o.budget_gb);

  fs::create_directories(o.out);
  const fs::path out(o.out);
  auto emit = [&](const std::string& name, const std::string& text) {
    write_text(out / name, text);
    manifest.add_output(out / name);
  };
  std::ostringstream a, b, c, t;
  write_ledger_csv(a, dense);
  write_ledger_csv(b, octree);
  write_comparison_csv(c, report);
  write_comparison_text(t, report, o.budget_gb);
  char total[128];
  std::snprintf(total, sizeof total, "dense total %.3f GB, octree total %.3f GB\n", dense.total_gb(), octree.total_gb());
  t << total;
  if (const int s = first_oom_stage(report); s > 0) t << "dense OOM at stage " << s << "\n";
  if (const int s = first_oom_stage(report, true); s > 0) t << "octree OOM at stage " << s << "\n";
  emit("ledger_dense.csv", a.str());
  emit("ledger_octree.csv", b.str());
  emit("comparison.csv", c.str());
  emit("report.txt", t.str());

  auto& cfg = manifest.config();
  cfg["arch"] = o.arch;
  cfg["budget_gb"] = o.budget_gb;
  cfg["bytes_per_element"] = o.bytes_per_element;
  cfg["occupancy"] = occ;
  manifest.write_in_dir(o.out, 1);
  if (!g.quiet) std::cout << t.str();
}

}  // namespace

void add_membudget(CLI::App& app, const Globals& g) {
  auto o = std::make_shared<MembudgetOptions>();
  auto* cmd = app.add_subcommand("membudget", "Analytical training-memory ledger and budget check");
  cmd->add_option("--arch", o->arch, "Architecture JSON, or 'reference' / 'reference-octree'")->required();
  cmd->add_option("--occupancy", o->occupancy, "Node-count CSV (stage,grid_edge,dense,mixed) for the octree ledger");
  cmd->add_option("--budget-gb", o->budget_gb, "Device memory budget in GB (2^30 bytes)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--bytes-per-element", o->bytes_per_element, "Bytes per stored value")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--out", o->out, "Report directory")->required();
  cmd->callback([o, &g] { run_membudget(*o, g); });
}

}  // namespace octsr::cli
