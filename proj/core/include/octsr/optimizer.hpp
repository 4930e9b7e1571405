// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "octsr/checkpoint.hpp"

namespace octsr {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-4;
  double weight_decay = 0.05;
};

struct MomentState {
  std::vector<double> m;
  std::vector<double> v;
};

/// One decoupled-weight-decay Adam update at step `step` (1-based):
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   p <- p - lr (m_hat / (sqrt(v_hat) + eps) + wd p)
void adamw_step(std::span<double> p, std::span<const double> g, MomentState& state, std::int64_t step,
                const AdamWConfig& cfg);

/// AdamW over named parameters. After each update, values and moments are
/// rounded to single precision so a checkpoint captures the state exactly.
class AdamW {
 public:
  std::int64_t steps() const { return steps_; }
  /// Updates every trainable parameter in `params` using its grad.
  void step(const std::vector<Param*>& params, const AdamWConfig& cfg);

  void export_to(OctwFile& file, const std::string& prefix) const;
  void import_from(const OctwFile& file, const std::string& prefix, std::int64_t steps);
  void reset() {
    state_.clear();
    steps_ = 0;
  }

 private:
  std::map<std::string, MomentState> state_;
  std::int64_t steps_ = 0;
};

}  // namespace octsr
