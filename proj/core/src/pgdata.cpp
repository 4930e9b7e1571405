// SPDX-License-Identifier: Apache-2.0
#include "octsr/pgdata.hpp"

#include <fstream>

#include <json.hpp>

#include "octsr/error.hpp"

namespace octsr {

namespace {

void require_2d(const LabelVolume& img, const char* op) {
  if (img.dims().nz != 1) throw ShapeError(std::string(op) + " expects a 2D image, got " + to_string(img.dims()));
}

// Rotation by 90 degrees of a square image.
LabelVolume rotate90(const LabelVolume& img) {
  const std::int64_t n = img.dims().nx;
  std::vector<std::uint8_t> out(static_cast<std::size_t>(n * n));
  for (std::int64_t y = 0; y < n; ++y)
    for (std::int64_t x = 0; x < n; ++x) out[static_cast<std::size_t>(x + n * y)] = img.at(y, n - 1 - x, 0);
  return LabelVolume(img.dims(), img.n_classes(), std::move(out));
}

LabelVolume mirror(const LabelVolume& img) {
  const std::int64_t nx = img.dims().nx, ny = img.dims().ny;
  std::vector<std::uint8_t> out(static_cast<std::size_t>(nx * ny));
  for (std::int64_t y = 0; y < ny; ++y)
    for (std::int64_t x = 0; x < nx; ++x) out[static_cast<std::size_t>(x + nx * y)] = img.at(nx - 1 - x, y, 0);
  return LabelVolume(img.dims(), img.n_classes(), std::move(out));
}

std::filesystem::path image_path(const std::filesystem::path& dir, int stage, std::size_t i, const char* ext) {
  return dir / ("stage_" + std::to_string(stage)) / ("image_" + std::to_string(i) + ext);
}

}  // namespace

LabelVolume downscale_classify(const LabelVolume& img, int patch) {
  require_2d(img, "downscale_classify");
  const Dims3& d = img.dims();
  if (patch < 1 || d.nx % patch != 0 || d.ny % patch != 0)
    throw ShapeError("image " + to_string(d) + " is not divisible into " + std::to_string(patch) + "-pixel patches");
  const std::int64_t ox = d.nx / patch, oy = d.ny / patch;
  const auto mixed = static_cast<std::uint8_t>(img.n_classes());
  std::vector<std::uint8_t> out(static_cast<std::size_t>(ox * oy));
  for (std::int64_t py = 0; py < oy; ++py)
    for (std::int64_t px = 0; px < ox; ++px) {
      const std::uint8_t first = img.at(px * patch, py * patch, 0);
      std::uint8_t label = first;
      for (std::int64_t y = py * patch; y < (py + 1) * patch && label != mixed; ++y)
        for (std::int64_t x = px * patch; x < (px + 1) * patch; ++x)
          if (img.at(x, y, 0) != first) {
            label = mixed;
            break;
          }
      out[static_cast<std::size_t>(px + ox * py)] = label;
    }
  return LabelVolume(Dims3{ox, oy, 1}, img.n_classes() + 1, std::move(out));
}

std::vector<LabelVolume> augment8(const LabelVolume& img) {
  require_2d(img, "augment8");
  if (img.dims().nx != img.dims().ny) throw ShapeError("augment8 expects a square image, got " + to_string(img.dims()));
  std::vector<LabelVolume> out;
  out.reserve(8);
  LabelVolume r = img;
  for (int k = 0; k < 4; ++k, r = rotate90(r)) out.push_back(r);
  for (int k = 0; k < 4; ++k) out.push_back(mirror(out[static_cast<std::size_t>(k)]));
  return out;
}

const PGStage& PGDataset::stage(int s) const {
  if (s < 1 || s > stage_count()) throw ShapeError("dataset has no stage " + std::to_string(s));
  return stages[static_cast<std::size_t>(s - 1)];
}

PGDataset build_pg_dataset(const std::vector<LabelVolume>& originals, int stages, bool augment) {
  if (originals.empty()) throw ShapeError("build_pg_dataset: no images");
  if (stages < 1) throw ShapeError("build_pg_dataset: stage count must be >= 1");
  PGDataset ds;
  ds.phases = originals.front().n_classes();
  for (const auto& img : originals) {
    require_2d(img, "build_pg_dataset");
    if (img.n_classes() != ds.phases) throw ShapeError("build_pg_dataset: images disagree on the class count");
  }
  for (int s = 1; s <= stages; ++s) {
    PGStage st;
    st.stage = s;
    st.patch = stage_patch(s, stages);
    st.n_classes = s < stages ? ds.phases + 1 : ds.phases;
    for (const auto& img : originals) {
      LabelVolume small = s < stages ? downscale_classify(img, st.patch) : img;
      if (augment) {
        for (auto& a : augment8(small)) st.images.push_back(std::move(a));
      } else {
        st.images.push_back(std::move(small));
      }
    }
    ds.stages.push_back(std::move(st));
  }
  return ds;
}

Tensor sample_hr_squares(const PGDataset& ds, int stage, int count, std::int64_t edge, int channels, Rng& rng) {
  const PGStage& st = ds.stage(stage);
  if (st.images.empty()) throw ShapeError("stage " + std::to_string(stage) + " has no images");
  if (channels < st.n_classes) throw ShapeError("sample_hr_squares: fewer channels than classes");
  Tensor out(Shape{count, edge, edge, channels});
  for (int i = 0; i < count; ++i) {
    const auto& img = st.images[static_cast<std::size_t>(uniform_index(rng, st.images.size()))];
    if (img.dims().nx < edge || img.dims().ny < edge)
      throw ShapeError("crop edge " + std::to_string(edge) + " exceeds stage image " + to_string(img.dims()));
    const Coord3 o = sample_origin(img.dims(), Dims3{edge, edge, 1}, rng);
    double* base = out.data.data() + static_cast<std::int64_t>(i) * edge * edge * channels;
    for (std::int64_t y = 0; y < edge; ++y)
      for (std::int64_t x = 0; x < edge; ++x) base[(y * edge + x) * channels + img.at(o[0] + x, o[1] + y, 0)] = 1.0;
  }
  return out;
}

void save_pg_dataset(const std::filesystem::path& dir, const PGDataset& ds) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json m;
  m["format"] = "octsr-pgdata";
  m["version"] = 1;
  m["phases"] = ds.phases;
  m["stages"] = nlohmann::ordered_json::array();
  for (const auto& st : ds.stages) {
    std::filesystem::create_directories(dir / ("stage_" + std::to_string(st.stage)));
    for (std::size_t i = 0; i < st.images.size(); ++i) save_vvol(image_path(dir, st.stage, i, ".vvol"), st.images[i]);
    m["stages"].push_back({{"stage", st.stage}, {"patch", st.patch}, {"n_classes", st.n_classes},
                           {"images", st.images.size()}});
  }
  std::ofstream os(dir / "manifest.json");
  os << m.dump(2) << "\n";
  if (!os) throw Error("cannot write " + (dir / "manifest.json").string());
}

PGDataset load_pg_dataset(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw Error("missing dataset manifest in " + dir.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed dataset manifest: " + std::string(e.what()));
  }
  try {
    PGDataset ds;
    ds.phases = m.at("phases").get<int>();
    for (const auto& sj : m.at("stages")) {
      PGStage st;
      st.stage = sj.at("stage").get<int>();
      st.patch = sj.at("patch").get<int>();
      st.n_classes = sj.at("n_classes").get<int>();
      const auto n = sj.at("images").get<std::size_t>();
      for (std::size_t i = 0; i < n; ++i) {
        st.images.push_back(load_vvol_labels(image_path(dir, st.stage, i, ".vvol")));
        if (st.images.back().n_classes() != st.n_classes)
          throw FormatError("class count of stage " + std::to_string(st.stage) + " image " + std::to_string(i) +
                            " disagrees with the manifest");
      }
      if (st.stage != ds.stage_count() + 1) throw FormatError("dataset stages must be listed in order");
      ds.stages.push_back(std::move(st));
    }
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed dataset manifest: " + std::string(e.what()));
  }
}

void export_pg_dataset_pgm(const std::filesystem::path& dir, const PGDataset& ds) {
  for (const auto& st : ds.stages) {
    std::filesystem::create_directories(dir / ("stage_" + std::to_string(st.stage)));
    for (std::size_t i = 0; i < st.images.size(); ++i) save_pgm_slice(image_path(dir, st.stage, i, ".pgm"), st.images[i]);
  }
}

}  // namespace octsr
