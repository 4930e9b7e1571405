// SPDX-License-Identifier: Apache-2.0
//
// OCTW tensor container:
//   "OCTW" | u32 version | u32 tensor count
//   per tensor: u32 name length | UTF-8 name | u32 rank | rank x u64 dims |
//               f32 payload (little-endian)
//   u64 manifest length | manifest bytes (JSON text, may be empty)
// Tensors are written in lexicographic name order.
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "octsr/autodiff.hpp"

namespace octsr {

inline constexpr std::uint32_t kOctwVersion = 1;

struct NamedTensor {
  Shape shape;
  std::vector<float> data;
};

struct OctwFile {
  std::map<std::string, NamedTensor> tensors;
  std::string manifest;
};

void save_octw(const std::filesystem::path& path, const OctwFile& file);
OctwFile load_octw(const std::filesystem::path& path);

/// Owns named parameters; iteration is in lexicographic name order and
/// references stay valid for the store's lifetime.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Param& create(const std::string& name, Shape shape, int stage, double fill = 0.0);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  std::size_t size() const { return params_.size(); }

  std::vector<Param*> all();
  std::vector<const Param*> all() const;
  /// Parameters owned by stages <= max_stage (stage 0 always included).
  std::vector<Param*> up_to_stage(int max_stage);

  void zero_grad();
  /// Rounds every value to the nearest float.
  void round_to_float();

  /// Copies parameters (stages <= max_stage) into `file` under prefix + name.
  void export_to(OctwFile& file, const std::string& prefix, int max_stage) const;
  /// Loads every parameter present in `file`; returns how many were found.
  /// Shape mismatches throw.
  std::size_t import_from(const OctwFile& file, const std::string& prefix);

 private:
  std::map<std::string, Param> params_;
};

/// Value rounded through single precision.
inline double to_float_precision(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace octsr
