// SPDX-License-Identifier: Apache-2.0
//
// JSON configuration files. A run config has three optional sections:
//   { "generator": {...}, "discriminator": {...}, "training": {...} }
// Omitted keys keep their defaults; an omitted discriminator section is
// derived from the generator. Unknown keys and type errors are collected and
// reported together.
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "octsr/discriminator.hpp"
#include "octsr/error.hpp"
#include "octsr/generator.hpp"
#include "octsr/trainer.hpp"
#include "octsr/volume.hpp"

namespace octsr {

class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct RunConfig {
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  TrainConfig training;
};

/// Full-size generator and critic with the training defaults.
RunConfig reference_run_config();

RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_json(const RunConfig& cfg);

/// {"phases": [names], "ranges": [{"lo": 0, "hi": 4200, "phase": "pore"}, ...]}
/// where "phase" is a name or an index.
ThresholdTable parse_threshold_table(std::string_view json_text);
ThresholdTable load_threshold_table(const std::filesystem::path& path);
std::string threshold_table_json(const ThresholdTable& table);

/// Generator restricted to the stages a checkpoint has trained, with its
/// weights loaded; `stage_out` receives that stage.
Generator load_generator_checkpoint(const std::filesystem::path& path, int* stage_out = nullptr);
/// Run configuration stored in a checkpoint manifest.
RunConfig checkpoint_run_config(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace octsr
