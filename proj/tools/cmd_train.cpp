// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "commands.hpp"
#include "octsr/config_io.hpp"
#include "octsr/trainer.hpp"
#include "run_manifest.hpp"

namespace octsr::cli {

namespace fs = std::filesystem;

namespace {

struct TrainOptions {
  std::string config;
  std::string preset;
  std::string lr;
  std::string pgdata;
  std::string out;
  std::string resume;
  std::uint64_t seed = 0;
  int max_stage = 0;
};

void append_history(const fs::path& path, const std::vector<StepRecord>& history, bool append) {
  std::ostringstream os;
  write_loss_history_csv(os, history);
  std::string text = os.str();
  if (append && fs::exists(path)) {
    text.erase(0, text.find('\n') + 1);
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out << text;
    if (!out) throw Error("write failed for " + path.string());
  } else {
    write_text(path, text);
  }
}

void run_train(const TrainOptions& o, const CLI::App& cmd, const Globals& g) {
  RunManifest manifest("train");
  RunConfig cfg;
  if (!o.config.empty()) {
    require_file(o.config, "--config");
    cfg = load_run_config(o.config);
    manifest.add_input(o.config);
  } else {
    cfg = preset_run_config(o.preset);
  }
  if (cmd.count("--seed") != 0) cfg.training.seed = o.seed;
  require_file(o.lr, "--lr");
  require_dir(o.pgdata, "--pgdata");
  if (!o.resume.empty()) require_file(o.resume, "--resume");

  const LabelVolume lr = load_vvol_labels(o.lr);
  const PGDataset ds = load_pg_dataset(o.pgdata);
  manifest.add_input(o.lr);
  manifest.add_input(fs::path(o.pgdata) / "manifest.json");
  if (lr.n_classes() != cfg.generator.phases)
    throw ShapeError("--lr has " + std::to_string(lr.n_classes()) + " classes but the generator expects " +
                     std::to_string(cfg.generator.phases));
  const int last = o.max_stage > 0 ? std::min(o.max_stage, cfg.generator.stages) : cfg.generator.stages;

  fs::create_directories(o.out);
  Trainer tr(cfg.generator, cfg.discriminator, cfg.training);
  tr.diagnostic_dir = fs::path(o.out) / "diagnostic";
  const fs::path history_path = fs::path(o.out) / "loss_history.csv";
  bool append = false;
  int next = 1;
  auto finish_stage = [&](const std::vector<StepRecord>& h) {
    append_history(history_path, h, append);
    append = true;
    const fs::path ckpt = fs::path(o.out) / ("stage_" + std::to_string(tr.stage()) + ".octw");
    tr.save_checkpoint(ckpt);
    manifest.add_output(ckpt);
    if (!g.quiet && !h.empty())
      std::cout << "stage " << tr.stage() << ": " << h.size() << " iterations, l_D " << h.back().l_d << ", l_G "
                << h.back().l_g << ", l_vw " << h.back().l_vw << "\n";
  };
  if (!o.resume.empty()) {
    manifest.add_input(o.resume);
    tr.load_checkpoint(o.resume);
    append = true;
    if (tr.epoch() < cfg.training.epochs_per_stage)
      finish_stage(tr.train_epochs(lr, ds, cfg.training.epochs_per_stage - tr.epoch()));
    next = tr.stage() + 1;
  }
  for (int s = next; s <= last; ++s) finish_stage(tr.train_stage(lr, ds, s));

  const fs::path final_ckpt = fs::path(o.out) / "final.octw";
  tr.save_checkpoint(final_ckpt);
  manifest.add_output(final_ckpt);
  manifest.add_output(history_path);
  manifest.set_seed(cfg.training.seed);
  manifest.config() = nlohmann::ordered_json::parse(run_config_json(cfg));
  manifest.config()["max_stage"] = last;
  manifest.write_in_dir(o.out, 1);
}

}  // namespace

void add_train(CLI::App& app, const Globals& g) {
  auto o = std::make_shared<TrainOptions>();
  auto* cmd = app.add_subcommand("train", "Train the generator and critic stage by stage");
  auto* config = cmd->add_option("--config", o->config, "Run configuration JSON");
  auto* preset = cmd->add_option("--preset", o->preset, "Built-in configuration instead of --config")
                     ->check(CLI::IsMember({"reference", "desk"}));
  config->excludes(preset);
  cmd->add_option("--lr", o->lr, "Low-resolution label VVOL volume")->required();
  cmd->add_option("--pgdata", o->pgdata, "Directory written by 'octsr pgdata'")->required();
  cmd->add_option("--out", o->out, "Checkpoint directory")->required();
  cmd->add_option("--resume", o->resume, "Checkpoint to continue from");
  cmd->add_option("--seed", o->seed, "Override the configured training seed");
  cmd->add_option("--max-stage", o->max_stage, "Stop after this stage (0 = all)")->check(CLI::NonNegativeNumber);
  cmd->callback([o, cmd, &g] {
    if (o->config.empty() && o->preset.empty()) throw UsageError("one of --config or --preset is required");
    run_train(*o, *cmd, g);
  });
}

}  // namespace octsr::cli
