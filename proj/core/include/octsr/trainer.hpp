// SPDX-License-Identifier: Apache-2.0
//
// Progressive WGAN-GP training. One iteration at stage s:
//   1. sample B low-resolution cubes, append a noise channel, run the
//      generator through stage s;
//   2. slice the stage-s reconstruction into xy, yz and xz stacks;
//   3. for each plane family: sample real crops, take one critic step on
//      D(fake) - D(real) + penalty;
//   4. one generator step on sum_planes(-D(fake)) + c * voxel_loss, where only
//      stage-s generator parameters are trainable.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "octsr/discriminator.hpp"
#include "octsr/generator.hpp"
#include "octsr/optimizer.hpp"
#include "octsr/pgdata.hpp"

namespace octsr {

struct TrainConfig {
  int epochs_per_stage = 100;
  int iterations_per_epoch = 16;
  int batch_size = 2;
  std::vector<double> learning_rates{1e-4, 1e-4, 1e-4, 1e-5, 1e-5};  // per stage
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-4;
  double weight_decay = 0.05;
  double gp_lambda = 10.0;
  double voxel_coeff = 10.0;
  int hr_squares_per_plane = 128;
  int fade_epochs = 20;
  std::uint64_t seed = 1;
  /// Verify every stage reconstruction is a probability field each step.
  bool check_probability = false;

  void validate() const;
  /// Rate of stage s; stages past the list reuse its last entry.
  double learning_rate(int stage) const;
  AdamWConfig optimizer(int stage) const;
};

struct StepRecord {
  std::int64_t iteration = 0;
  int stage = 0;
  int epoch = 0;
  double alpha = 1.0;
  double l_d = 0.0;   // mean over plane families
  double l_g = 0.0;
  double l_gp = 0.0;  // mean over plane families
  double l_vw = 0.0;
  std::array<double, 3> plane_l_d{};
  std::array<double, 3> plane_l_gp{};
  bool probability_ok = true;
  std::vector<StageCounts> counts;
};

void write_loss_history_csv(std::ostream& os, std::span<const StepRecord> history);

class Trainer {
 public:
  Trainer(GeneratorConfig g, DiscriminatorConfig d, TrainConfig t);

  Generator& generator() { return gen_; }
  const Generator& generator() const { return gen_; }
  Discriminator& discriminator() { return disc_; }
  const Discriminator& discriminator() const { return disc_; }
  const TrainConfig& config() const { return cfg_; }

  int stage() const { return stage_; }
  int epoch() const { return epoch_; }
  std::int64_t iteration() const { return iteration_; }
  double alpha() const;

  /// Freezes generator stages below s, resets both optimizers and the epoch.
  void begin_stage(int s);

  StepRecord step(const LabelVolume& lr, const PGDataset& hr);
  /// Runs `epochs` epochs of iterations_per_epoch steps at the current stage.
  std::vector<StepRecord> train_epochs(const LabelVolume& lr, const PGDataset& hr, int epochs);
  /// begin_stage(s) followed by epochs_per_stage epochs.
  std::vector<StepRecord> train_stage(const LabelVolume& lr, const PGDataset& hr, int s);

  /// Generator parameters of stages <= stage(), the whole critic, optimizer
  /// moments, RNG state and counters.
  void save_checkpoint(const std::filesystem::path& path) const;
  /// Same or later stage: moves to the checkpoint's stage and resumes
  /// exactly. Earlier stage: loads the weights it has and keeps fresh
  /// initialization for the rest.
  void load_checkpoint(const std::filesystem::path& path);

  /// Where a diagnostic checkpoint goes when a loss turns non-finite.
  std::filesystem::path diagnostic_dir;

 private:
  GeneratorConfig gcfg_;
  TrainConfig cfg_;
  Generator gen_;
  Discriminator disc_;
  AdamW g_opt_;
  AdamW d_opt_;
  Rng rng_;
  int stage_ = 1;
  int epoch_ = 0;
  std::int64_t iteration_ = 0;
};

}  // namespace octsr
