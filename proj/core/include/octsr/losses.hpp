// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "octsr/autodiff.hpp"
#include "octsr/random.hpp"
#include "octsr/volume.hpp"

namespace octsr {

/// ReLU masks recorded by a critic's primal pass, in evaluation order.
struct CriticTrace {
  std::vector<std::vector<double>> masks;
};

/// A piecewise-linear scalar critic over [M, H, W, C] images.
class Critic {
 public:
  virtual ~Critic() = default;
  /// Per-image scores, shape [M]. With `grad`, parameters are differentiable.
  virtual Var score(Tape& t, Var images, bool grad, CriticTrace* trace) const = 0;
  /// Directional derivative of each score along `dirs` (same shape as the
  /// images), using the activation pattern of a previous score() call.
  virtual Var tangent(Tape& t, Var dirs, bool grad, const CriticTrace& trace) const = 0;
};

struct PenaltyResult {
  Var loss;                        // value = penalty; gradient reaches critic parameters
  double value = 0.0;
  std::vector<double> grad_norms;  // ||dD/dx|| per interpolated sample
};

/// lambda * mean_m (||grad_x D(x_m)|| - 1)^2 at x_m = e_m real_{m mod R} +
/// (1 - e_m) fake_m, e_m ~ U[0, 1). Both inputs are treated as constants.
PenaltyResult gradient_penalty(Tape& t, const Critic& critic, const Tensor& real, const Tensor& fake, double lambda,
                               Rng& rng);

/// Mean squared difference between `lr_pore` [B, E, E, E] and the pore channel
/// of `sr` [B, G, G, G, C] sampled at the block corners (G a multiple of E).
Var voxel_loss(Tape& t, Var lr_pore, Var sr, int pore_channel = 0);
/// Value-only form on fields; `lr` holds the pore channel alone.
double voxel_loss(const FeatureField& lr_pore, const FeatureField& sr, int pore_channel = 0);

}  // namespace octsr
