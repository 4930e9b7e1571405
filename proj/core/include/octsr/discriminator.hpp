// SPDX-License-Identifier: Apache-2.0
//
// Progressive-growing 2D critic. Block L_s (stage s) maps C_{s+1} channels to
// C_s with a stride-2 3x3 convolution and ReLU, where C_{X+1} is the input
// channel count. After L_1 a tail of stride-2 convolutions reaches 4x4, a 4x4
// convolution reaches 1x1 and a fully connected layer emits the score.
//
// Training at stage s < X feeds images through a 1x1 adapter (in -> C_{s+1})
// before L_s. During a fade the new block's output is blended with the
// adapted, 2x2 average-pooled image:
//   h = alpha * relu(L_s(from_s(x))) + (1 - alpha) * from_{s-1}(pool(x))
// and h enters L_{s-1}. At alpha = 1 the pooled path is not evaluated.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "octsr/checkpoint.hpp"
#include "octsr/generator.hpp"
#include "octsr/losses.hpp"

namespace octsr {

struct DiscriminatorConfig {
  int stages = 5;
  int in_channels = 5;
  int entry_edge = 32;                            // image edge at stage 1
  std::vector<int> widths{512, 512, 256, 128, 64};  // C_1 .. C_X
  int tail_width = 512;

  std::int64_t stage_edge(int stage) const { return static_cast<std::int64_t>(entry_edge) << (stage - 1); }
  /// Stride-2 convolutions between L_1's output and the 4x4 map.
  int tail_convs() const;
  void validate() const;

  static DiscriminatorConfig reference();
  /// Matches a generator: same stage count, class-channel input, stage-1
  /// edge equal to the generator's input edge.
  static DiscriminatorConfig for_generator(const GeneratorConfig& g, std::vector<int> widths, int tail_width);
  /// Small critic for a generator: widths halve from 32 at stage 1 down to a
  /// floor of 16, tail width 32.
  static DiscriminatorConfig desk(const GeneratorConfig& g);
};

/// alpha = min(1, epoch / fade_epochs); stage 1 never fades.
struct FadeState {
  int epoch = 0;
  int fade_epochs = 20;
  double alpha() const;
};

class Discriminator {
 public:
  explicit Discriminator(DiscriminatorConfig cfg, std::uint64_t init_seed = 0);

  const DiscriminatorConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  void init_weights(std::uint64_t seed);
  void zero_weights();

  /// Counted layers in input-to-output order; adapters are excluded.
  std::vector<LayerCount> layer_counts() const;
  std::int64_t count_params() const;

  /// Scores [M] for images [M, E_s, E_s, C_in].
  Var score(Tape& t, Var images, int stage, double alpha, bool grad, CriticTrace* trace = nullptr) const;
  /// Linearization of score() around the trace's activation pattern.
  Var tangent(Tape& t, Var dirs, int stage, double alpha, bool grad, const CriticTrace& trace) const;

 private:
  Var run(Tape& t, Var x, int stage, double alpha, bool grad, CriticTrace* record, const CriticTrace* replay) const;

  DiscriminatorConfig cfg_;
  ParamStore params_;
};

/// Discriminator frozen at one stage and fade value.
class StageCritic : public Critic {
 public:
  StageCritic(const Discriminator& d, int stage, double alpha) : d_(d), stage_(stage), alpha_(alpha) {}
  Var score(Tape& t, Var images, bool grad, CriticTrace* trace) const override {
    return d_.score(t, images, stage_, alpha_, grad, trace);
  }
  Var tangent(Tape& t, Var dirs, bool grad, const CriticTrace& trace) const override {
    return d_.tangent(t, dirs, stage_, alpha_, grad, trace);
  }

 private:
  const Discriminator& d_;
  int stage_;
  double alpha_;
};

}  // namespace octsr
