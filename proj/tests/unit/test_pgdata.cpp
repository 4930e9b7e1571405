// SPDX-License-Identifier: Apache-2.0
#include <set>

#include "doctest.h"
#include "octsr/error.hpp"
#include "octsr/pgdata.hpp"
#include "oracles.hpp"

using namespace octsr;

namespace {

LabelVolume image(std::int64_t w, std::int64_t h, int classes, Rng& rng, int block = 1) {
  return oracle::random_blocky({w, h, 1}, classes, block, rng);
}

std::vector<std::uint8_t> raw(const LabelVolume& v) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(v.dims().count()));
  for (std::int64_t i = 0; i < v.dims().count(); ++i) out[static_cast<std::size_t>(i)] = v[i];
  return out;
}

// Element k of the dihedral group on a square image: k % 4 quarter turns
// (out(x, y) = in(y, n - 1 - x) per turn), mirrored in x when k >= 4.
std::vector<std::uint8_t> dihedral(const LabelVolume& v, int k) {
  const std::int64_t n = v.dims().nx;
  auto src = [&](std::int64_t x, std::int64_t y) {
    if (k >= 4) x = n - 1 - x;
    for (int r = 0; r < k % 4; ++r) {
      const std::int64_t px = y, py = n - 1 - x;
      x = px;
      y = py;
    }
    return v.at(x, y, 0);
  };
  std::vector<std::uint8_t> out;
  for (std::int64_t y = 0; y < n; ++y)
    for (std::int64_t x = 0; x < n; ++x) out.push_back(src(x, y));
  return out;
}

}  // namespace

TEST_CASE("downscaling classifies homogeneous and mixed patches") {
  Rng rng(101);
  const LabelVolume img = image(15, 15, 3, rng, 5);
  const LabelVolume small = downscale_classify(img, 5);
  CHECK(small.dims() == Dims3{3, 3, 1});
  CHECK(small.n_classes() == 4);
  for (int py = 0; py < 3; ++py)
    for (int px = 0; px < 3; ++px) CHECK(small.at(px, py, 0) == img.at(5 * px, 5 * py, 0));

  auto cells = raw(img);
  cells[7 + 15 * 7] = static_cast<std::uint8_t>((img.at(7, 7, 0) + 1) % 3);
  const LabelVolume m = downscale_classify(LabelVolume(img.dims(), 3, cells), 5);
  CHECK(m.at(1, 1, 0) == 3);
  CHECK(m.at(0, 0, 0) == small.at(0, 0, 0));
  CHECK(downscale_classify(img, 1) == LabelVolume(img.dims(), 4, raw(img)));
  CHECK_THROWS_AS(downscale_classify(img, 4), ShapeError);
  CHECK_THROWS_AS(augment8(image(4, 6, 2, rng)), ShapeError);
}

TEST_CASE("stage ladder of a 1024 pixel image") {
  Rng rng(102);
  const LabelVolume img = image(1024, 1024, 4, rng, 64);
  const PGDataset ds = build_pg_dataset({img}, 5, false);
  REQUIRE(ds.stage_count() == 5);
  const std::int64_t want[] = {64, 128, 256, 512, 1024};
  for (int s = 1; s <= 5; ++s) {
    const PGStage& st = ds.stage(s);
    CHECK(st.patch == stage_patch(s, 5));
    CHECK(st.images.size() == 1);
    CHECK(st.images[0].dims() == Dims3{want[s - 1], want[s - 1], 1});
    CHECK(st.n_classes == (s < 5 ? 5 : 4));
  }
  CHECK(raw(ds.stage(5).images[0]) == raw(img));
  CHECK_THROWS(ds.stage(6));
}

TEST_CASE("eight dihedral variants") {
  Rng rng(103);
  const LabelVolume img = image(6, 6, 5, rng);
  const auto all = augment8(img);
  REQUIRE(all.size() == 8);
  std::set<std::vector<std::uint8_t>> distinct;
  for (int k = 0; k < 8; ++k) {
    CHECK(raw(all[static_cast<std::size_t>(k)]) == dihedral(img, k));
    distinct.insert(raw(all[static_cast<std::size_t>(k)]));
  }
  CHECK(distinct.size() == 8);
}

TEST_CASE("downscaling commutes with every dihedral transform") {
  Rng rng(104);
  for (int trial = 0; trial < 50; ++trial) {
    const std::int64_t n = 4 * (1 + static_cast<std::int64_t>(uniform_index(rng, 4)));
    const LabelVolume img = image(n, n, 3, rng, 1 + static_cast<int>(uniform_index(rng, 3)));
    const auto aug = augment8(img);
    const auto down_aug = augment8(downscale_classify(img, 4));
    for (std::size_t k = 0; k < 8; ++k) CHECK(downscale_classify(aug[k], 4) == down_aug[k]);
  }
}

TEST_CASE("datasets save, load and sample") {
  Rng rng(105);
  const PGDataset ds = build_pg_dataset({image(16, 16, 3, rng, 2), image(16, 16, 3, rng, 4)}, 3, true);
  CHECK(ds.phases == 3);
  CHECK(ds.stage(1).images.size() == 16);
  oracle::TempDir dir("pgdata");
  save_pg_dataset(dir.path / "pg", ds);
  const PGDataset back = load_pg_dataset(dir.path / "pg");
  REQUIRE(back.stage_count() == 3);
  CHECK(back.phases == 3);
  for (int s = 1; s <= 3; ++s) {
    CHECK(back.stage(s).patch == ds.stage(s).patch);
    CHECK(back.stage(s).images == ds.stage(s).images);
  }
  export_pg_dataset_pgm(dir.path / "pgm", ds);
  CHECK(std::filesystem::exists(dir.path / "pgm" / "stage_1" / "image_0.pgm"));

  const Tensor crops = sample_hr_squares(ds, 2, 7, 8, 4, rng);
  CHECK(crops.shape == Shape{7, 8, 8, 4});
  for (std::size_t i = 0; i < crops.data.size(); i += 4) {
    double s = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK((crops.data[i + c] == 0.0 || crops.data[i + c] == 1.0));
      s += crops.data[i + c];
    }
    CHECK(s == 1.0);
  }
  CHECK_THROWS_AS(sample_hr_squares(ds, 1, 1, 8, 4, rng), ShapeError);
}
