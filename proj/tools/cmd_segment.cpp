// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <iostream>
#include <memory>

#include "commands.hpp"
#include "octsr/config_io.hpp"
#include "octsr/volume.hpp"
#include "run_manifest.hpp"

namespace octsr::cli {

namespace {

struct SegmentOptions {
  std::string in;
  std::string thresholds;
  std::string out;
  std::string pgm;
  int median_radius = 1;
  int median_iterations = 0;
};

void run_segment(const SegmentOptions& o, const Globals& g) {
  require_file(o.in, "--in");
  RunManifest manifest("segment");
  manifest.add_input(o.in);
  ThresholdTable table = ThresholdTable::berea();
  if (!o.thresholds.empty()) {
    require_file(o.thresholds, "--thresholds");
    table = load_threshold_table(o.thresholds);
    manifest.add_input(o.thresholds);
  }
  if (peek_vvol_type(o.in) != VvolType::U16Gray) throw UsageError("--in must hold a u16 grayscale VVOL volume");
  LabelVolume labels = segment_grayscale(load_vvol_gray(o.in), table);
  if (o.median_iterations > 0) labels = median_filter3(labels, o.median_radius, o.median_iterations);
  save_vvol(o.out, labels);
  manifest.add_output(o.out);
  if (!o.pgm.empty()) {
    save_pgm_slice(o.pgm, labels, labels.dims().nz / 2);
    manifest.add_output(o.pgm);
  }
  auto& c = manifest.config();
  c["thresholds"] = nlohmann::ordered_json::parse(threshold_table_json(table));
  c["median_radius"] = o.median_radius;
  c["median_iterations"] = o.median_iterations;
  manifest.write_beside(o.out, 1);
  if (!g.quiet) std::cout << "segmented " << to_string(labels.dims()) << " into " << table.n_phases() << " phases\n";
}

}  // namespace

void add_segment(CLI::App& app, const Globals& g) {
  auto o = std::make_shared<SegmentOptions>();
  auto* cmd = app.add_subcommand("segment", "Threshold a grayscale volume into phase labels");
  cmd->add_option("--in", o->in, "Grayscale VVOL volume (u16)")->required();
  cmd->add_option("--thresholds", o->thresholds, "Threshold table JSON (default: built-in Berea table)");
  cmd->add_option("--out", o->out, "Label VVOL output")->required();
  cmd->add_option("--median-radius", o->median_radius, "Mode filter radius")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--median-iterations", o->median_iterations, "Mode filter passes (0 = off)")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--pgm", o->pgm, "Also export the middle z-slice as PGM");
  cmd->callback([o, &g] { run_segment(*o, g); });
}

void add_downsample(CLI::App& app, const Globals& g) {
  struct Options {
    std::string in, out;
    int factor = 2;
  };
  auto o = std::make_shared<Options>();
  auto* cmd = app.add_subcommand("downsample", "Nearest-neighbour downsampling of a label volume");
  cmd->add_option("--in", o->in, "Label VVOL volume")->required();
  cmd->add_option("--factor", o->factor, "Integer factor per axis")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--out", o->out, "Label VVOL output")->required();
  cmd->callback([o, &g] {
    require_file(o->in, "--in");
    RunManifest manifest("downsample");
    manifest.add_input(o->in);
    const LabelVolume v = downsample_nearest(load_vvol_labels(o->in), o->factor);
    save_vvol(o->out, v);
    manifest.config()["factor"] = o->factor;
    manifest.add_output(o->out);
    manifest.write_beside(o->out, 1);
    if (!g.quiet) std::cout << "downsampled to " << to_string(v.dims()) << "\n";
  });
}

}  // namespace octsr::cli
