// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <iostream>
#include <memory>

#include "commands.hpp"
#include "octsr/config_io.hpp"
#include "octsr/generator.hpp"
#include "octsr/volume.hpp"
#include "run_manifest.hpp"

namespace octsr::cli {

namespace {

struct SuperresOptions {
  std::string ckpt;
  std::string config;
  std::string preset;
  std::string in;
  std::string out;
  std::string pgm;
  std::uint64_t seed = 0;
  int median_radius = 1;
  int median_iterations = 2;
  bool plan = false;
};

nlohmann::ordered_json plan_json(const GeneratorConfig& gc, const Dims3& in) {
  const std::int64_t factor = std::int64_t{1} << (gc.stages - 1);
  const std::int64_t e = gc.input_edge;
  if (in.nx % e != 0 || in.ny % e != 0 || in.nz % e != 0)
    throw ShapeError("input dims " + to_string(in) + " are not multiples of the input edge " + std::to_string(e));
  const Dims3 out{in.nx * factor, in.ny * factor, in.nz * factor};
  nlohmann::ordered_json j;
  j["stages"] = gc.stages;
  j["input_edge"] = e;
  j["input_dims"] = {in.nx, in.ny, in.nz};
  j["output_dims"] = {out.nx, out.ny, out.nz};
  j["scale"] = factor;
  j["chunks"] = (in.nx / e) * (in.ny / e) * (in.nz / e);
  j["output_vvol_bytes"] = 4 + 4 + 1 + 4 + 24 + out.count();
  return j;
}

void run_superres(const SuperresOptions& o, const Globals& g) {
  require_file(o.in, "--in");
  const VvolHeader header = peek_vvol_header(o.in);
  if (header.type != VvolType::U8Labels) throw UsageError("--in must hold a label VVOL volume");

  if (o.plan) {
    GeneratorConfig gc;
    if (!o.ckpt.empty()) {
      require_file(o.ckpt, "--ckpt");
      gc = checkpoint_run_config(o.ckpt).generator;
    } else if (!o.config.empty()) {
      require_file(o.config, "--config");
      gc = load_run_config(o.config).generator;
    } else {
      gc = preset_run_config(o.preset).generator;
    }
    std::cout << plan_json(gc, header.dims).dump(2) << "\n";
    return;
  }
  if (o.ckpt.empty()) throw UsageError("--ckpt is required unless --plan is given");
  if (o.out.empty()) throw UsageError("--out is required unless --plan is given");
  require_file(o.ckpt, "--ckpt");

  RunManifest manifest("superres");
  manifest.add_input(o.ckpt);
  manifest.add_input(o.in);
  int stage = 0;
  const Generator gen = load_generator_checkpoint(o.ckpt, &stage);
  const LabelVolume lr = load_vvol_labels(o.in);
  if (lr.n_classes() != gen.config().phases)
    throw ShapeError("--in has " + std::to_string(lr.n_classes()) + " classes but the checkpoint expects " +
                     std::to_string(gen.config().phases));
  LabelVolume sr = superresolve_chunked(gen, lr, o.seed, g.worker_count());
  if (o.median_iterations > 0) sr = median_filter3(sr, o.median_radius, o.median_iterations);
  save_vvol(o.out, sr);
  manifest.add_output(o.out);
  if (!o.pgm.empty()) {
    save_pgm_slice(o.pgm, sr, sr.dims().nz / 2);
    manifest.add_output(o.pgm);
  }
  manifest.set_seed(o.seed);
  auto& c = manifest.config();
  c["checkpoint_stage"] = stage;
  c["plan"] = plan_json(gen.config(), lr.dims());
  c["median_radius"] = o.median_radius;
  c["median_iterations"] = o.median_iterations;
  manifest.write_beside(o.out, g.worker_count());
  if (!g.quiet) std::cout << "super-resolved " << to_string(lr.dims()) << " -> " << to_string(sr.dims()) << "\n";
}

}  // namespace

void add_superres(CLI::App& app, const Globals& g) {
  auto o = std::make_shared<SuperresOptions>();
  auto* cmd = app.add_subcommand("superres", "Super-resolve a low-resolution label volume");
  cmd->add_option("--ckpt", o->ckpt, "Trained checkpoint (OCTW)");
  cmd->add_option("--in", o->in, "Low-resolution label VVOL volume")->required();
  cmd->add_option("--out", o->out, "Super-resolved label VVOL output");
  cmd->add_option("--seed", o->seed, "Noise seed")->capture_default_str();
  cmd->add_option("--median-radius", o->median_radius, "Mode filter radius")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--median-iterations", o->median_iterations, "Mode filter passes (0 = off)")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--pgm", o->pgm, "Also export the middle z-slice as PGM");
  cmd->add_flag("--plan", o->plan, "Print the output header and chunking without generating");
  auto* config = cmd->add_option("--config", o->config, "Run configuration for --plan without a checkpoint");
  auto* preset = cmd->add_option("--preset", o->preset, "Built-in configuration for --plan without a checkpoint")
                     ->check(CLI::IsMember({"reference", "desk"}));
  config->excludes(preset);
  cmd->callback([o, &g] {
    if (o->plan && o->ckpt.empty() && o->config.empty() && o->preset.empty())
      throw UsageError("--plan needs --ckpt, --config or --preset");
    run_superres(*o, g);
  });
}

}  // namespace octsr::cli
