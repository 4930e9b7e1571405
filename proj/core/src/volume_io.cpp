// SPDX-License-Identifier: Apache-2.0
#include <fstream>

#include "octsr/binio.hpp"
#include "octsr/error.hpp"
#include "octsr/volume.hpp"

namespace octsr {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  return is;
}

void write_header(std::ostream& os, const VvolHeader& h) {
  binio::put_bytes(os, "VVOL", 4);
  binio::put<std::uint32_t>(os, kVvolVersion);
  binio::put<std::uint8_t>(os, static_cast<std::uint8_t>(h.type));
  binio::put<std::uint32_t>(os, h.channels);
  binio::put<std::uint64_t>(os, static_cast<std::uint64_t>(h.dims.nx));
  binio::put<std::uint64_t>(os, static_cast<std::uint64_t>(h.dims.ny));
  binio::put<std::uint64_t>(os, static_cast<std::uint64_t>(h.dims.nz));
}

VvolHeader read_header(std::istream& is) {
  binio::expect_magic(is, "VVOL");
  const auto version = binio::get<std::uint32_t>(is);
  if (version != kVvolVersion)
    throw FormatError("unsupported VVOL version " + std::to_string(version));
  VvolHeader h;
  const auto t = binio::get<std::uint8_t>(is);
  if (t > 2) throw FormatError("unknown VVOL dtype " + std::to_string(t));
  h.type = static_cast<VvolType>(t);
  h.channels = binio::get<std::uint32_t>(is);
  h.dims.nx = static_cast<std::int64_t>(binio::get<std::uint64_t>(is));
  h.dims.ny = static_cast<std::int64_t>(binio::get<std::uint64_t>(is));
  h.dims.nz = static_cast<std::int64_t>(binio::get<std::uint64_t>(is));
  if (h.dims.nx <= 0 || h.dims.ny <= 0 || h.dims.nz <= 0 || h.dims.nx > (1 << 24) ||
      h.dims.ny > (1 << 24) || h.dims.nz > (1 << 24))
    throw FormatError("implausible VVOL dims " + to_string(h.dims));
  return h;
}

VvolHeader read_typed_header(std::istream& is, VvolType want, const std::filesystem::path& path) {
  auto h = read_header(is);
  if (h.type != want)
    throw FormatError(path.string() + ": VVOL dtype " + std::to_string(static_cast<int>(h.type)) +
                      " where " + std::to_string(static_cast<int>(want)) + " was expected");
  return h;
}

}  // namespace

void save_vvol(const std::filesystem::path& path, const LabelVolume& v) {
  auto os = open_out(path);
  write_header(os, {VvolType::U8Labels, static_cast<std::uint32_t>(v.n_classes()), v.dims()});
  binio::put_bytes(os, v.data().data(), v.data().size());
  if (!os) throw Error("write failed: " + path.string());
}

void save_vvol(const std::filesystem::path& path, const GrayVolume& v) {
  auto os = open_out(path);
  write_header(os, {VvolType::U16Gray, 1, v.dims()});
  binio::put_bytes(os, v.data().data(), v.data().size() * sizeof(std::uint16_t));
  if (!os) throw Error("write failed: " + path.string());
}

void save_vvol(const std::filesystem::path& path, const FeatureField& f) {
  auto os = open_out(path);
  write_header(os, {VvolType::F32Features, static_cast<std::uint32_t>(f.channels()), f.dims()});
  std::vector<float> buf(f.data().begin(), f.data().end());
  binio::put_bytes(os, buf.data(), buf.size() * sizeof(float));
  if (!os) throw Error("write failed: " + path.string());
}

VvolType peek_vvol_type(const std::filesystem::path& path) { return peek_vvol_header(path).type; }

VvolHeader peek_vvol_header(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_header(is);
}

LabelVolume load_vvol_labels(const std::filesystem::path& path) {
  auto is = open_in(path);
  const auto h = read_typed_header(is, VvolType::U8Labels, path);
  std::vector<std::uint8_t> data(static_cast<std::size_t>(h.dims.count()));
  binio::get_bytes(is, data.data(), data.size());
  return LabelVolume(h.dims, static_cast<int>(h.channels), std::move(data));
}

GrayVolume load_vvol_gray(const std::filesystem::path& path) {
  auto is = open_in(path);
  const auto h = read_typed_header(is, VvolType::U16Gray, path);
  std::vector<std::uint16_t> data(static_cast<std::size_t>(h.dims.count()));
  binio::get_bytes(is, data.data(), data.size() * sizeof(std::uint16_t));
  return GrayVolume(h.dims, std::move(data));
}

FeatureField load_vvol_features(const std::filesystem::path& path) {
  auto is = open_in(path);
  const auto h = read_typed_header(is, VvolType::F32Features, path);
  std::vector<float> buf(static_cast<std::size_t>(h.dims.count()) * h.channels);
  binio::get_bytes(is, buf.data(), buf.size() * sizeof(float));
  return FeatureField(h.dims, static_cast<int>(h.channels), std::vector<double>(buf.begin(), buf.end()));
}

void save_pgm_slice(const std::filesystem::path& path, const LabelVolume& v, std::int64_t z) {
  const Dims3& d = v.dims();
  if (z < 0 || z >= d.nz) throw ShapeError("PGM slice index out of range");
  auto os = open_out(path);
  os << "P5\n" << d.nx << " " << d.ny << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(d.nx));
  for (std::int64_t y = 0; y < d.ny; ++y) {
    for (std::int64_t x = 0; x < d.nx; ++x) row[static_cast<std::size_t>(x)] = label_gray(v.at(x, y, z));
    binio::put_bytes(os, row.data(), row.size());
  }
  if (!os) throw Error("write failed: " + path.string());
}

}  // namespace octsr
