// SPDX-License-Identifier: Apache-2.0
#include "octsr/checkpoint.hpp"

#include <fstream>

#include "octsr/binio.hpp"
#include "octsr/error.hpp"

namespace octsr {

void save_octw(const std::filesystem::path& path, const OctwFile& file) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  binio::put_bytes(os, "OCTW", 4);
  binio::put<std::uint32_t>(os, kOctwVersion);
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& [name, t] : file.tensors) {
    if (shape_numel(t.shape) != static_cast<std::int64_t>(t.data.size()))
      throw ShapeError("tensor " + name + " has " + std::to_string(t.data.size()) + " values for shape " +
                       shape_string(t.shape));
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    binio::put_bytes(os, name.data(), name.size());
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) binio::put<std::uint64_t>(os, static_cast<std::uint64_t>(d));
    binio::put_bytes(os, t.data.data(), t.data.size() * sizeof(float));
  }
  binio::put<std::uint64_t>(os, file.manifest.size());
  binio::put_bytes(os, file.manifest.data(), file.manifest.size());
  if (!os) throw Error("write failed: " + path.string());
}

OctwFile load_octw(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  binio::expect_magic(is, "OCTW");
  const auto version = binio::get<std::uint32_t>(is);
  if (version != kOctwVersion)
    throw FormatError("unsupported OCTW version " + std::to_string(version) + " in " + path.string());
  const auto count = binio::get<std::uint32_t>(is);
  OctwFile file;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = binio::get<std::uint32_t>(is);
    if (len > (1u << 16)) throw FormatError("implausible tensor name length in " + path.string());
    std::string name(len, '\0');
    binio::get_bytes(is, name.data(), len);
    const auto rank = binio::get<std::uint32_t>(is);
    if (rank > 8) throw FormatError("implausible tensor rank for " + name);
    NamedTensor t;
    for (std::uint32_t r = 0; r < rank; ++r) t.shape.push_back(static_cast<std::int64_t>(binio::get<std::uint64_t>(is)));
    const auto n = shape_numel(t.shape);
    if (n < 0 || n > (std::int64_t{1} << 34)) throw FormatError("implausible tensor size for " + name);
    t.data.resize(static_cast<std::size_t>(n));
    binio::get_bytes(is, t.data.data(), t.data.size() * sizeof(float));
    if (!file.tensors.emplace(std::move(name), std::move(t)).second) throw FormatError("duplicate tensor name");
  }
  const auto mlen = binio::get<std::uint64_t>(is);
  if (mlen > (std::uint64_t{1} << 30)) throw FormatError("implausible manifest length");
  file.manifest.resize(static_cast<std::size_t>(mlen));
  binio::get_bytes(is, file.manifest.data(), file.manifest.size());
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after OCTW manifest");
  return file;
}

// ---------------------------------------------------------------------------

Param& ParamStore::create(const std::string& name, Shape shape, int stage, double fill) {
  auto [it, inserted] = params_.try_emplace(name, name, std::move(shape), fill);
  if (!inserted) throw Error("duplicate parameter name " + name);
  it->second.stage = stage;
  return it->second;
}

Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter " + name);
  return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter " + name);
  return it->second;
}

std::vector<Param*> ParamStore::all() {
  std::vector<Param*> out;
  for (auto& [_, p] : params_) out.push_back(&p);
  return out;
}

std::vector<const Param*> ParamStore::all() const {
  std::vector<const Param*> out;
  for (const auto& [_, p] : params_) out.push_back(&p);
  return out;
}

std::vector<Param*> ParamStore::up_to_stage(int max_stage) {
  std::vector<Param*> out;
  for (auto& [_, p] : params_)
    if (p.stage <= max_stage) out.push_back(&p);
  return out;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.zero_grad();
}

void ParamStore::round_to_float() {
  for (auto& [_, p] : params_)
    for (auto& v : p.value) v = to_float_precision(v);
}

void ParamStore::export_to(OctwFile& file, const std::string& prefix, int max_stage) const {
  for (const auto& [name, p] : params_) {
    if (p.stage > max_stage) continue;
    NamedTensor t;
    t.shape = p.shape;
    t.data.assign(p.value.begin(), p.value.end());
    file.tensors[prefix + name] = std::move(t);
  }
}

std::size_t ParamStore::import_from(const OctwFile& file, const std::string& prefix) {
  std::size_t found = 0;
  for (auto& [name, p] : params_) {
    auto it = file.tensors.find(prefix + name);
    if (it == file.tensors.end()) continue;
    if (it->second.shape != p.shape)
      throw ShapeError("checkpoint tensor " + prefix + name + " has shape " + shape_string(it->second.shape) +
                       ", expected " + shape_string(p.shape));
    p.value.assign(it->second.data.begin(), it->second.data.end());
    ++found;
  }
  return found;
}

}  // namespace octsr
