// SPDX-License-Identifier: Apache-2.0
//
// Progressive-growing training images. Stage s of an X-stage pipeline uses
// patches of 2^(X-s) pixels: each non-overlapping patch collapses to its
// phase when homogeneous and to the mixed label (= phase count) otherwise.
// The last stage keeps the originals. 2D images are LabelVolumes with nz = 1.
#pragma once

#include <filesystem>
#include <vector>

#include "octsr/autodiff.hpp"
#include "octsr/volume.hpp"

namespace octsr {

/// Output has n_classes + 1 classes; the extra label marks mixed patches.
LabelVolume downscale_classify(const LabelVolume& image, int patch);

/// Rotations by 0, 90, 180, 270 degrees, then the same four after a mirror
/// across the vertical axis.
std::vector<LabelVolume> augment8(const LabelVolume& image);

struct PGStage {
  int stage = 0;
  int patch = 1;
  int n_classes = 0;
  std::vector<LabelVolume> images;
};

struct PGDataset {
  int phases = 0;
  std::vector<PGStage> stages;  // stages[s - 1] is stage s

  int stage_count() const { return static_cast<int>(stages.size()); }
  const PGStage& stage(int s) const;
};

inline int stage_patch(int stage, int stages) { return 1 << (stages - stage); }

/// Builds every stage from the originals; with `augment`, the eight
/// dihedral variants of each stage image are stored.
PGDataset build_pg_dataset(const std::vector<LabelVolume>& originals, int stages, bool augment = true);

/// [count, edge, edge, channels] one-hot crops. Each crop picks an image and
/// then an origin uniformly.
Tensor sample_hr_squares(const PGDataset& ds, int stage, int count, std::int64_t edge, int channels, Rng& rng);

/// Layout: manifest.json plus stage_<s>/image_<i>.vvol.
void save_pg_dataset(const std::filesystem::path& dir, const PGDataset& ds);
PGDataset load_pg_dataset(const std::filesystem::path& dir);
/// stage_<s>/image_<i>.pgm for every image.
void export_pg_dataset_pgm(const std::filesystem::path& dir, const PGDataset& ds);

}  // namespace octsr
