// SPDX-License-Identifier: Apache-2.0
//
// Dense voxel containers and the volume-level operations that feed the rest
// of the pipeline. Every container stores voxels x-fastest:
//   idx = x + nx * (y + ny * z)
// and FeatureField stores the channels of one voxel contiguously.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "octsr/random.hpp"

namespace octsr {

struct Dims3 {
  std::int64_t nx = 0;
  std::int64_t ny = 0;
  std::int64_t nz = 0;

  std::int64_t count() const { return nx * ny * nz; }
  std::int64_t index(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return x + nx * (y + ny * z);
  }
  bool is_cube() const { return nx == ny && ny == nz; }
  bool operator==(const Dims3&) const = default;
};

std::string to_string(const Dims3& d);

/// Phase ids used by the shipped threshold table and the CLI colour map.
enum class Phase : std::uint8_t { Pore = 0, Clay = 1, Quartz = 2, Feldspar = 3 };
inline constexpr int kRockPhases = 4;

class GrayVolume {
 public:
  GrayVolume() = default;
  GrayVolume(Dims3 dims, std::vector<std::uint16_t> data);

  const Dims3& dims() const { return dims_; }
  std::span<const std::uint16_t> data() const { return data_; }
  std::uint16_t at(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return data_[static_cast<std::size_t>(dims_.index(x, y, z))];
  }

 private:
  Dims3 dims_;
  std::vector<std::uint16_t> data_;
};

class LabelVolume {
 public:
  LabelVolume() = default;
  LabelVolume(Dims3 dims, int n_classes, std::vector<std::uint8_t> data);
  /// Uniform volume.
  LabelVolume(Dims3 dims, int n_classes, std::uint8_t fill);

  const Dims3& dims() const { return dims_; }
  int n_classes() const { return n_classes_; }
  std::span<const std::uint8_t> data() const { return data_; }
  std::uint8_t at(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return data_[static_cast<std::size_t>(dims_.index(x, y, z))];
  }
  std::uint8_t operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  bool operator==(const LabelVolume&) const = default;

 private:
  Dims3 dims_;
  int n_classes_ = 0;
  std::vector<std::uint8_t> data_;
};

class FeatureField {
 public:
  FeatureField() = default;
  FeatureField(Dims3 dims, int channels, std::vector<double> data);
  FeatureField(Dims3 dims, int channels);  // zero-filled

  const Dims3& dims() const { return dims_; }
  int channels() const { return channels_; }
  std::span<const double> data() const { return data_; }
  std::span<double> mutable_data() { return data_; }
  double at(std::int64_t voxel, int c) const {
    return data_[static_cast<std::size_t>(voxel * channels_ + c)];
  }
  std::span<const double> voxel(std::int64_t v) const {
    return std::span<const double>(data_).subspan(static_cast<std::size_t>(v * channels_),
                                                  static_cast<std::size_t>(channels_));
  }

  /// True when every voxel's channel vector is nonnegative and sums to 1 +- tol.
  bool is_probability(double tol = 1e-5) const;

  bool operator==(const FeatureField&) const = default;

 private:
  Dims3 dims_;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Half-open intensity ranges [lo, hi) mapped to phase ids.
struct ThresholdRange {
  std::uint32_t lo = 0;
  std::uint32_t hi = 0;
  std::uint8_t phase = 0;
};

class ThresholdTable {
 public:
  ThresholdTable(std::vector<std::string> phase_names, std::vector<ThresholdRange> ranges);

  /// Pore 0-4200, clay 4200-4800, quartz 4800-7000 and 8000-65536,
  /// feldspar 7000-8000.
  static ThresholdTable berea();

  int n_phases() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& phase_names() const { return names_; }
  const std::vector<ThresholdRange>& ranges() const { return ranges_; }
  bool covers_full_domain() const;
  std::optional<std::uint8_t> lookup(std::uint16_t intensity) const;

 private:
  std::vector<std::string> names_;
  std::vector<ThresholdRange> ranges_;  // sorted by lo
};

LabelVolume segment_grayscale(const GrayVolume& raw, const ThresholdTable& table);

FeatureField one_hot_encode(const LabelVolume& v);
/// Per-voxel argmax; ties go to the lowest channel.
LabelVolume one_hot_decode(const FeatureField& f);

/// Keeps voxel (f*x, f*y, f*z). Axes of extent 1 are left alone.
LabelVolume downsample_nearest(const LabelVolume& v, int factor);
FeatureField downsample_nearest(const FeatureField& f, int factor);
/// Block replication, the inverse of downsample_nearest.
LabelVolume upsample_replicate(const LabelVolume& v, int factor);

struct PlaneStacks {
  std::vector<FeatureField> xy;  // nz slices, image axes (x, y)
  std::vector<FeatureField> yz;  // nx slices, image axes (y, z)
  std::vector<FeatureField> xz;  // ny slices, image axes (x, z)
};
PlaneStacks slice_planes(const FeatureField& f);

/// Categorical median: neighbourhood mode over the clipped (2r+1)^3 window,
/// ties keep the current label.
LabelVolume median_filter3(const LabelVolume& v, int radius = 1, int iterations = 2);

using Coord3 = std::array<std::int64_t, 3>;

LabelVolume sample_subvolume(const LabelVolume& v, Coord3 origin, Dims3 size);
/// Uniform origin over every position where the cube fits.
LabelVolume sample_subvolume(const LabelVolume& v, Dims3 size, Rng& rng);
/// Copies the cube at `origin` of a 2D or 3D volume; used by crop samplers.
Coord3 sample_origin(const Dims3& dims, const Dims3& size, Rng& rng);

// VVOL container: "VVOL", u32 version, u8 dtype, u32 channels, 3 x u64 dims,
// little-endian payload. For label volumes the channel field carries the
// class count.
enum class VvolType : std::uint8_t { U8Labels = 0, U16Gray = 1, F32Features = 2 };
inline constexpr std::uint32_t kVvolVersion = 1;

void save_vvol(const std::filesystem::path& path, const LabelVolume& v);
void save_vvol(const std::filesystem::path& path, const GrayVolume& v);
void save_vvol(const std::filesystem::path& path, const FeatureField& f);
struct VvolHeader {
  VvolType type = VvolType::U8Labels;
  std::uint32_t channels = 0;
  Dims3 dims;
};

VvolType peek_vvol_type(const std::filesystem::path& path);
/// Reads only the header; the payload is not validated.
VvolHeader peek_vvol_header(const std::filesystem::path& path);
LabelVolume load_vvol_labels(const std::filesystem::path& path);
GrayVolume load_vvol_gray(const std::filesystem::path& path);
FeatureField load_vvol_features(const std::filesystem::path& path);

/// Gray value for each label in PGM exports: pore black, quartz dark gray,
/// feldspar medium gray, clay light gray, mixed (label 4) white.
std::uint8_t label_gray(std::uint8_t label);
/// Writes z-slice `z` of `v` as binary PGM (P5, maxval 255).
void save_pgm_slice(const std::filesystem::path& path, const LabelVolume& v, std::int64_t z = 0);

}  // namespace octsr
