// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "CLI11.hpp"
#include "octsr/config_io.hpp"

namespace octsr::cli {

struct Globals {
  int threads = 0;  // 0: hardware concurrency
  bool quiet = false;

  int worker_count() const;
};

void add_segment(CLI::App& app, const Globals& g);
void add_pgdata(CLI::App& app, const Globals& g);
void add_train(CLI::App& app, const Globals& g);
void add_superres(CLI::App& app, const Globals& g);
void add_metrics(CLI::App& app, const Globals& g);
void add_membudget(CLI::App& app, const Globals& g);
void add_config(CLI::App& app, const Globals& g);
void add_synth(CLI::App& app, const Globals& g);
void add_downsample(CLI::App& app, const Globals& g);

/// Built-in run presets: "reference" and "desk".
RunConfig preset_run_config(const std::string& name);
/// Phase names for a label count: the rock names for four classes.
std::vector<std::string> phase_names(int n_classes);

}  // namespace octsr::cli
