// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <filesystem>
#include <iostream>
#include <memory>

#include "commands.hpp"
#include "octsr/pgdata.hpp"
#include "octsr/volume.hpp"
#include "run_manifest.hpp"

namespace octsr::cli {

namespace fs = std::filesystem;

namespace {

struct PgdataOptions {
  std::string hr;
  std::string out;
  int stages = 5;
  int slice_step = 1;
  bool no_augment = false;
  bool pgm = false;
};

std::vector<fs::path> vvol_files(const fs::path& p) {
  if (fs::is_regular_file(p)) return {p};
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(p))
    if (e.is_regular_file() && e.path().extension() == ".vvol") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

void run_pgdata(const PgdataOptions& o, const Globals& g) {
  if (!fs::exists(o.hr)) throw UsageError("--hr: no such file or directory: " + o.hr);
  const auto files = vvol_files(o.hr);
  if (files.empty()) throw UsageError("--hr: no .vvol images in " + o.hr);
  RunManifest manifest("pgdata");
  std::vector<LabelVolume> images;
  for (const auto& f : files) {
    manifest.add_input(f);
    const LabelVolume v = load_vvol_labels(f);
    const Dims3 d = v.dims();
    if (d.nz == 1) {
      images.push_back(v);
      continue;
    }
    for (std::int64_t z = 0; z < d.nz; z += o.slice_step) images.push_back(sample_subvolume(v, Coord3{0, 0, z}, Dims3{d.nx, d.ny, 1}));
  }
  const PGDataset ds = build_pg_dataset(images, o.stages, !o.no_augment);
  fs::create_directories(o.out);
  save_pg_dataset(o.out, ds);
  if (o.pgm) export_pg_dataset_pgm(o.out, ds);
  auto& c = manifest.config();
  c["stages"] = o.stages;
  c["slice_step"] = o.slice_step;
  c["augment"] = !o.no_augment;
  c["originals"] = images.size();
  manifest.add_output(fs::path(o.out) / "manifest.json");
  manifest.write_in_dir(o.out, 1);
  if (!g.quiet)
    std::cout << "wrote " << ds.stage_count() << " stages of " << ds.stages.back().images.size() << " images to "
              << o.out << "\n";
}

}  // namespace

void add_pgdata(CLI::App& app, const Globals& g) {
  auto o = std::make_shared<PgdataOptions>();
  auto* cmd = app.add_subcommand("pgdata", "Build the progressive-growing training image set");
  cmd->add_option("--hr", o->hr, "Label VVOL image or directory of them; 3D volumes contribute xy slices")->required();
  cmd->add_option("--out", o->out, "Output dataset directory")->required();
  cmd->add_option("--stages", o->stages, "Number of stages")->capture_default_str()->check(CLI::Range(1, 12));
  cmd->add_option("--slice-step", o->slice_step, "z step between slices taken from 3D volumes")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--no-augment", o->no_augment, "Skip the eight dihedral variants");
  cmd->add_flag("--pgm", o->pgm, "Also export every image as PGM");
  cmd->callback([o, &g] { run_pgdata(*o, g); });
}

}  // namespace octsr::cli
