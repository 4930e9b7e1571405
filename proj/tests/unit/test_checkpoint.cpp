// SPDX-License-Identifier: Apache-2.0
#include <fstream>

#include "doctest.h"
#include "octsr/checkpoint.hpp"
#include "octsr/error.hpp"
#include "oracles.hpp"

using namespace octsr;

namespace {

OctwFile sample_file(Rng& rng) {
  OctwFile f;
  for (const char* name : {"b.weight", "a.bias", "c"}) {
    NamedTensor t;
    t.shape = {2, 3};
    for (int i = 0; i < 6; ++i) t.data.push_back(static_cast<float>(uniform01(rng) - 0.5));
    f.tensors[name] = t;
  }
  f.tensors["scalar"] = NamedTensor{{}, {1.25f}};
  f.manifest = R"({"format": "test"})";
  return f;
}

}  // namespace

TEST_CASE("OCTW round trip is exact and byte-identical") {
  oracle::TempDir dir("octw");
  Rng rng(61);
  const OctwFile f = sample_file(rng);
  save_octw(dir / "a.octw", f);
  const OctwFile back = load_octw(dir / "a.octw");
  CHECK(back.manifest == f.manifest);
  REQUIRE(back.tensors.size() == f.tensors.size());
  for (const auto& [name, t] : f.tensors) {
    CHECK(back.tensors.at(name).shape == t.shape);
    CHECK(back.tensors.at(name).data == t.data);
  }
  save_octw(dir / "b.octw", back);
  CHECK(oracle::file_bytes(dir / "a.octw") == oracle::file_bytes(dir / "b.octw"));
}

TEST_CASE("corrupt OCTW files are rejected") {
  oracle::TempDir dir("octw_bad");
  Rng rng(62);
  save_octw(dir / "ok.octw", sample_file(rng));
  const std::string bytes = oracle::file_bytes(dir / "ok.octw");
  std::ofstream(dir / "short.octw", std::ios::binary) << bytes.substr(0, bytes.size() - 5);
  CHECK_THROWS_AS(load_octw(dir / "short.octw"), FormatError);
  std::ofstream(dir / "long.octw", std::ios::binary) << bytes << "x";
  CHECK_THROWS_AS(load_octw(dir / "long.octw"), FormatError);
  std::string magic = bytes;
  magic[0] = 'X';
  std::ofstream(dir / "magic.octw", std::ios::binary) << magic;
  CHECK_THROWS_AS(load_octw(dir / "magic.octw"), FormatError);
  std::string version = bytes;
  version[4] = 9;
  std::ofstream(dir / "version.octw", std::ios::binary) << version;
  CHECK_THROWS_AS(load_octw(dir / "version.octw"), FormatError);
  CHECK_THROWS(load_octw(dir / "missing.octw"));
}

TEST_CASE("parameter stores filter by stage and check shapes on import") {
  ParamStore s;
  s.create("x", {2}, 1, 0.5);
  s.create("y", {3}, 2, 1.0);
  s.create("shared", {1}, 0, 2.0);
  CHECK_THROWS(s.create("x", {1}, 1));
  CHECK(s.up_to_stage(1).size() == 2);
  CHECK(s.up_to_stage(2).size() == 3);
  OctwFile f;
  s.export_to(f, "p.", 1);
  CHECK(f.tensors.count("p.x") == 1);
  CHECK(f.tensors.count("p.y") == 0);

  ParamStore t;
  t.create("x", {2}, 1);
  t.create("y", {3}, 2, 7.0);
  CHECK(t.import_from(f, "p.") == 1);
  CHECK(t.at("x").value == std::vector<double>{0.5, 0.5});
  CHECK(t.at("y").value == std::vector<double>{7.0, 7.0, 7.0});
  ParamStore u;
  u.create("x", {3}, 1);
  CHECK_THROWS_AS(u.import_from(f, "p."), ShapeError);

  s.at("x").value[0] = 0.1;
  s.round_to_float();
  CHECK(s.at("x").value[0] == static_cast<double>(0.1f));
}
