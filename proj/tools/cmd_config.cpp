// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <memory>

#include "commands.hpp"
#include "octsr/config_io.hpp"
#include "run_manifest.hpp"

namespace octsr::cli {

RunConfig preset_run_config(const std::string& name) {
  if (name == "reference") return reference_run_config();
  if (name == "desk") {
    RunConfig r;
    r.generator = GeneratorConfig::desk();
    r.discriminator = DiscriminatorConfig::desk(r.generator);
    r.training.epochs_per_stage = 10;
    r.training.iterations_per_epoch = 10;
    r.training.batch_size = 1;
    r.training.fade_epochs = 5;
    r.training.hr_squares_per_plane = 16;
    r.training.learning_rates = {1e-3};
    return r;
  }
  throw UsageError("unknown preset '" + name + "' (expected reference or desk)");
}

std::vector<std::string> phase_names(int n_classes) {
  if (n_classes == kRockPhases) return ThresholdTable::berea().phase_names();
  std::vector<std::string> names;
  for (int i = 0; i < n_classes; ++i) names.push_back("phase" + std::to_string(i));
  return names;
}

namespace {

struct ConfigOptions {
  std::string preset = "desk";
  std::string check;
  std::string out;
};

void run_config(const ConfigOptions& o) {
  if (!o.check.empty()) {
    require_file(o.check, "--check");
    const RunConfig cfg = load_run_config(o.check);
    std::cout << run_config_json(cfg) << "\n";
    return;
  }
  const std::string text = run_config_json(preset_run_config(o.preset)) + "\n";
  if (o.out.empty()) {
    std::cout << text;
    return;
  }
  write_text(o.out, text);
}

}  // namespace

void add_config(CLI::App& app, const Globals&) {
  auto o = std::make_shared<ConfigOptions>();
  auto* cmd = app.add_subcommand("config", "Print a preset run configuration or validate one");
  auto* preset = cmd->add_option("--preset", o->preset, "Preset to emit")
                     ->capture_default_str()
                     ->check(CLI::IsMember({"reference", "desk"}));
  auto* check = cmd->add_option("--check", o->check, "Validate a run configuration file and print it with defaults filled in");
  check->excludes(preset);
  cmd->add_option("--out", o->out, "Write to this file instead of stdout")->excludes(check);
  cmd->callback([o] { run_config(*o); });
}

}  // namespace octsr::cli
