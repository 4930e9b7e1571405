// SPDX-License-Identifier: Apache-2.0
//
// Provenance records written next to every artifact. Wall-clock time and
// worker count live in a separate timing file.
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace octsr::cli {

/// Bad flags or missing inputs; exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

class RunManifest {
 public:
  explicit RunManifest(std::string command);

  nlohmann::ordered_json& config() { return config_; }
  void set_seed(std::uint64_t seed) { seed_ = seed; has_seed_ = true; }
  void add_input(const std::filesystem::path& p);
  /// Directories are recorded by name; regular files also get a content hash.
  void add_output(const std::filesystem::path& p);

  /// Manifest and timing files inside `dir`.
  void write_in_dir(const std::filesystem::path& dir, int threads) const;
  /// `<file>.run_manifest.json` and `<file>.run_timing.json`.
  void write_beside(const std::filesystem::path& file, int threads) const;

 private:
  nlohmann::ordered_json manifest_json() const;
  nlohmann::ordered_json timing_json(int threads) const;

  std::string command_;
  nlohmann::ordered_json config_ = nlohmann::ordered_json::object();
  std::uint64_t seed_ = 0;
  bool has_seed_ = false;
  std::vector<nlohmann::ordered_json> inputs_;
  std::vector<std::filesystem::path> outputs_;
  std::chrono::steady_clock::time_point start_;
  std::chrono::system_clock::time_point started_at_;
};

void write_text(const std::filesystem::path& path, const std::string& text);
void require_file(const std::filesystem::path& path, const std::string& flag);
void require_dir(const std::filesystem::path& path, const std::string& flag);

}  // namespace octsr::cli
