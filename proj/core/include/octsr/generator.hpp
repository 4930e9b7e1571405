// SPDX-License-Identifier: Apache-2.0
//
// Octree-based progressive-growing generator. Stage 1 runs dense
// convolutions on the full input grid and classifies every node; each later
// stage upsamples only the nodes the previous stage classified as mixed.
// Nodes classified as one of the phases are memorized with their probability
// vectors and replicated into the dense reconstruction of every later stage.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "octsr/checkpoint.hpp"
#include "octsr/octree.hpp"
#include "octsr/sparse.hpp"
#include "octsr/volume.hpp"

namespace octsr {

struct GeneratorConfig {
  int stages = 5;
  int input_edge = 32;
  std::vector<int> widths{512, 512, 256, 128, 64};
  int phases = 4;
  int noise_channels = 1;
  int first_kernel = 5;
  int conv_kernel = 3;
  double norm_eps = 1e-4;
  double norm_momentum = 0.1;

  int class_channels() const { return phases + 1; }
  int input_channels() const { return phases + noise_channels; }
  int mixed_channel() const { return phases; }
  /// Grid edge of stage s (1-based).
  std::int64_t stage_edge(int stage) const { return static_cast<std::int64_t>(input_edge) << (stage - 1); }
  std::int64_t output_edge() const { return stage_edge(stages); }

  /// Throws ShapeError listing every invalid field.
  void validate() const;

  static GeneratorConfig reference();
  /// Three stages, widths 32/32/16, 8^3 input.
  static GeneratorConfig desk();
};

struct LayerCount {
  int stage = 0;
  std::string name;
  std::string kind;
  std::int64_t params = 0;
};

struct StageOutput {
  int stage = 0;
  std::int64_t grid_edge = 0;
  SparseVar probs;      // classifier softmax at every node of the stage
  SparseVar mixed;      // features of the nodes forwarded to the next stage
  SparseVar memorized;  // probability rows of the nodes that stop here
  Var dense;            // [B, G, G, G, P+1]; invalid when not requested
  std::int64_t node_count = 0;
  std::int64_t mixed_count = 0;
  std::int64_t dense_count = 0;
};

/// Running-statistics update produced by a training-mode batch norm.
struct RunningUpdate {
  std::string layer;
  std::vector<double> mean;
  std::vector<double> variance;  // unbiased
};

struct GeneratorForward {
  std::vector<StageOutput> stages;
  std::vector<RunningUpdate> norm_updates;
};

class Generator {
 public:
  explicit Generator(GeneratorConfig cfg, std::uint64_t init_seed = 0);

  const GeneratorConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Fan-in scaled uniform weights and biases, norm gammas 1 and betas 0.
  void init_weights(std::uint64_t seed);
  void zero_weights();

  std::vector<LayerCount> layer_counts() const;
  std::int64_t count_params() const;

  struct Options {
    int stages = -1;                  // active stages; -1 means all
    bool training = false;            // batch statistics instead of running ones
    bool grad = false;                // parameters enter as differentiable leaves
    int trainable_from = 1;           // stages below enter the tape as constants
    bool reconstruct_all = true;      // dense field for every stage, else last only
    bool record_norm_updates = false;
  };

  /// `input` is a dense [B, E, E, E, P + noise] field.
  GeneratorForward forward(Tape& t, Var input, const Options& opt) const;
  void apply_norm_updates(const std::vector<RunningUpdate>& updates);

 private:
  GeneratorConfig cfg_;
  ParamStore params_;
  std::map<std::string, std::int64_t> fan_in_;
};

/// One-hot input with the noise channel appended, batch of one.
Tensor generator_input(const GeneratorConfig& cfg, const LabelVolume& lr, Rng& rng);
/// Appends a batch item to an existing [B, E, E, E, C] input tensor.
void append_generator_input(Tensor& batch, const GeneratorConfig& cfg, const LabelVolume& lr, Rng& rng);

struct GenerateResult {
  LabelVolume labels;               // P phases at the output resolution
  FeatureField probabilities;       // P+1 channels at the output resolution
  std::vector<StageCounts> counts;  // per stage
};

/// Inference with running statistics. Noise is drawn from Rng(seed).
GenerateResult generate(const Generator& gen, const LabelVolume& lr, std::uint64_t seed);

/// Disjoint tiling into input_edge cubes; chunk i (z, y, x order) uses seed
/// `seed ^ i`, so the result does not depend on `threads`.
LabelVolume superresolve_chunked(const Generator& gen, const LabelVolume& lr, std::uint64_t seed, int threads = 1);

}  // namespace octsr
