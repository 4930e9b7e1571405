// SPDX-License-Identifier: Apache-2.0
#include "run_manifest.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "octsr/error.hpp"

namespace octsr::cli {

namespace fs = std::filesystem;

std::uint64_t fnv1a_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

RunManifest::RunManifest(std::string command)
    : command_(std::move(command)), start_(std::chrono::steady_clock::now()),
      started_at_(std::chrono::system_clock::now()) {}

void RunManifest::add_input(const fs::path& p) {
  nlohmann::ordered_json e;
  e["path"] = p.string();
  if (fs::is_regular_file(p)) e["fnv1a64"] = hex64(fnv1a_file(p));
  inputs_.push_back(std::move(e));
}

void RunManifest::add_output(const fs::path& p) { outputs_.push_back(p); }

nlohmann::ordered_json RunManifest::manifest_json() const {
  nlohmann::ordered_json m;
  m["command"] = command_;
  m["tool_version"] = OCTSR_VERSION;
  if (has_seed_) m["seed"] = seed_;
  m["config"] = config_;
  m["inputs"] = inputs_;
  auto outs = nlohmann::ordered_json::array();
  for (const auto& p : outputs_) {
    nlohmann::ordered_json e;
    e["path"] = p.string();
    if (fs::is_regular_file(p)) e["fnv1a64"] = hex64(fnv1a_file(p));
    outs.push_back(std::move(e));
  }
  m["outputs"] = outs;
  return m;
}

nlohmann::ordered_json RunManifest::timing_json(int threads) const {
  const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  const std::time_t t = std::chrono::system_clock::to_time_t(started_at_);
  std::ostringstream ts;
  ts << std::put_time(std::gmtime(&t), "%Y-%m-%dT%H:%M:%SZ");
  nlohmann::ordered_json j;
  j["command"] = command_;
  j["started_utc"] = ts.str();
  j["wall_clock_seconds"] = elapsed;
  j["threads"] = threads;
  return j;
}

void RunManifest::write_in_dir(const fs::path& dir, int threads) const {
  write_text(dir / "run_manifest.json", manifest_json().dump(2) + "\n");
  write_text(dir / "run_timing.json", timing_json(threads).dump(2) + "\n");
}

void RunManifest::write_beside(const fs::path& file, int threads) const {
  write_text(file.string() + ".run_manifest.json", manifest_json().dump(2) + "\n");
  write_text(file.string() + ".run_timing.json", timing_json(threads).dump(2) + "\n");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

void require_file(const fs::path& path, const std::string& flag) {
  if (!fs::is_regular_file(path)) throw UsageError(flag + ": no such file: " + path.string());
}

void require_dir(const fs::path& path, const std::string& flag) {
  if (!fs::is_directory(path)) throw UsageError(flag + ": no such directory: " + path.string());
}

}  // namespace octsr::cli
