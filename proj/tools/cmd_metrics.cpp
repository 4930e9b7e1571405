// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>

#include "commands.hpp"
#include "octsr/metrics.hpp"
#include "octsr/volume.hpp"
#include "run_manifest.hpp"

namespace octsr::cli {

namespace fs = std::filesystem;

namespace {

struct MetricsOptions {
  std::string in;
  std::string out;
  int patches = 0;
  int patch_size = 64;
  int max_lag = 32;
  std::uint64_t seed = 0;
};

template <class F>
std::string csv(F&& write) {
  std::ostringstream os;
  write(os);
  return os.str();
}

void run_metrics(const MetricsOptions& o, const Globals& g) {
  require_file(o.in, "--in");
  if (peek_vvol_type(o.in) != VvolType::U8Labels) throw UsageError("--in must hold a label VVOL volume");
  RunManifest manifest("metrics");
  manifest.add_input(o.in);
  const LabelVolume v = load_vvol_labels(o.in);
  const Dims3 d = v.dims();
  const auto names = phase_names(v.n_classes());
  const int lag = static_cast<int>(std::min<std::int64_t>(o.max_lag, std::max({d.nx, d.ny, d.nz}) - 1));
  fs::create_directories(o.out);
  const fs::path out(o.out);
  auto emit = [&](const std::string& name, const std::string& text) {
    write_text(out / name, text);
    manifest.add_output(out / name);
  };

  const PhaseCounts counts = phase_counts(v);
  emit("fractions.csv", csv([&](std::ostream& os) { write_fraction_csv(os, counts, names); }));
  emit("surface_area.csv", csv([&](std::ostream& os) { write_pair_csv(os, relative_surface_area(v), names); }));
  for (int p = 0; p < v.n_classes(); ++p) {
    CorrelationSummary s;
    s.mean = two_point_correlation(v, p, lag);
    s.std.assign(s.mean.size(), 0.0);
    emit("s2_" + names[static_cast<std::size_t>(p)] + ".csv", csv([&](std::ostream& os) { write_correlation_csv(os, s); }));
  }

  if (o.patches > 0) {
    const Dims3 patch{o.patch_size, o.patch_size, d.nz == 1 ? 1 : o.patch_size};
    if (patch.nx > d.nx || patch.ny > d.ny || patch.nz > d.nz)
      throw UsageError("--patch-size " + std::to_string(o.patch_size) + " exceeds the volume " + to_string(d));
    const int plag = std::min(lag, o.patch_size - 1);
    std::ostringstream summary;
    write_summary_csv_header(summary);
    // Every metric sees the same patch origins.
    for (int p = 0; p < v.n_classes(); ++p) {
      Rng rng(o.seed);
      write_summary_csv_row(summary, "fraction_" + names[static_cast<std::size_t>(p)],
                            patch_statistics(v, o.patches, patch, rng, [p](const LabelVolume& x) {
                              return phase_counts(x).fractions()[static_cast<std::size_t>(p)];
                            }));
    }
    for (int a = 0; a < v.n_classes(); ++a)
      for (int b = a; b < v.n_classes(); ++b) {
        Rng rng(o.seed);
        write_summary_csv_row(summary,
                              "surface_" + names[static_cast<std::size_t>(a)] + "_" + names[static_cast<std::size_t>(b)],
                              patch_statistics(v, o.patches, patch, rng, [a, b](const LabelVolume& x) {
                                return relative_surface_area(x).fraction(a, b);
                              }));
      }
    emit("patch_summary.csv", summary.str());
    for (int p = 0; p < v.n_classes(); ++p) {
      Rng rng(o.seed);
      const auto s = patch_two_point_correlation(v, p, plag, o.patches, patch, rng);
      emit("patch_s2_" + names[static_cast<std::size_t>(p)] + ".csv",
           csv([&](std::ostream& os) { write_correlation_csv(os, s); }));
    }
  }

  manifest.set_seed(o.seed);
  auto& c = manifest.config();
  c["patches"] = o.patches;
  c["patch_size"] = o.patch_size;
  c["max_lag"] = lag;
  c["phases"] = names;
  manifest.write_in_dir(o.out, 1);
  if (!g.quiet) {
    const auto f = counts.fractions();
    for (std::size_t i = 0; i < f.size(); ++i) std::cout << names[i] << ' ' << f[i] << '\n';
  }
}

}  // namespace

void add_metrics(CLI::App& app, const Globals& g) {
  auto o = std::make_shared<MetricsOptions>();
  auto* cmd = app.add_subcommand("metrics", "Phase fractions, surface areas and two-point correlations");
  cmd->add_option("--in", o->in, "Label VVOL volume or image")->required();
  cmd->add_option("--out", o->out, "Output CSV directory")->required();
  cmd->add_option("--patches", o->patches, "Random patches for the distribution summaries (0 = whole volume only)")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--patch-size", o->patch_size, "Patch edge in voxels")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--max-lag", o->max_lag, "Largest two-point correlation lag")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", o->seed, "Patch placement seed")->capture_default_str();
  cmd->callback([o, &g] { run_metrics(*o, g); });
}

}  // namespace octsr::cli
