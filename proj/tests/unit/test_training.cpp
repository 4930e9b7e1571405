// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "octsr/checkpoint.hpp"
#include "octsr/error.hpp"
#include "octsr/trainer.hpp"
#include "oracles.hpp"

using namespace octsr;

namespace {

struct Setup {
  GeneratorConfig g;
  DiscriminatorConfig d;
  TrainConfig t;
  LabelVolume lr;
  PGDataset hr;
};

Setup tiny(std::uint64_t seed = 3) {
  Setup s;
  s.g.stages = 2;
  s.g.input_edge = 8;
  s.g.widths = {4, 3};
  s.g.phases = 2;
  s.d = DiscriminatorConfig::for_generator(s.g, {4, 3}, 4);
  s.t.batch_size = 1;
  s.t.iterations_per_epoch = 2;
  s.t.epochs_per_stage = 1;
  s.t.hr_squares_per_plane = 3;
  s.t.fade_epochs = 2;
  s.t.learning_rates = {1e-3, 1e-3};
  s.t.seed = seed;
  s.t.check_probability = true;
  Rng rng(111);
  s.lr = oracle::random_spheres({12, 12, 12}, 2, 0.3, rng);
  s.hr = build_pg_dataset({oracle::random_blocky({32, 32, 1}, 2, 3, rng), oracle::random_blocky({32, 32, 1}, 2, 2, rng)}, 2);
  return s;
}

std::map<std::string, std::vector<double>> snapshot(const ParamStore& p) {
  std::map<std::string, std::vector<double>> out;
  for (const Param* q : p.all()) out[q->name] = q->value;
  return out;
}

bool same(const StepRecord& a, const StepRecord& b) {
  return a.iteration == b.iteration && a.stage == b.stage && a.epoch == b.epoch && a.alpha == b.alpha &&
         a.l_d == b.l_d && a.l_g == b.l_g && a.l_gp == b.l_gp && a.l_vw == b.l_vw;
}

}  // namespace

TEST_CASE("one step updates only the current stage") {
  Setup s = tiny();
  Trainer tr(s.g, s.d, s.t);
  tr.train_epochs(s.lr, s.hr, 1);
  tr.begin_stage(2);
  CHECK(tr.alpha() == 0.0);
  const auto g0 = snapshot(tr.generator().params());
  const auto d0 = snapshot(tr.discriminator().params());
  const StepRecord r = tr.step(s.lr, s.hr);
  CHECK(r.stage == 2);
  CHECK(r.probability_ok);
  CHECK(std::isfinite(r.l_d));
  CHECK(std::isfinite(r.l_g));
  CHECK(r.l_gp >= 0.0);
  CHECK(r.l_vw >= 0.0);
  CHECK(r.l_vw <= 1.0);
  CHECK(r.counts.size() == 2);
  CHECK(r.l_d == doctest::Approx((r.plane_l_d[0] + r.plane_l_d[1] + r.plane_l_d[2]) / 3.0));
  CHECK(tr.iteration() == 3);

  int changed_s2 = 0;
  for (const Param* p : tr.generator().params().all()) {
    const bool moved = p->value != g0.at(p->name);
    if (p->stage == 1) CHECK_MESSAGE(!moved, p->name);
    if (p->stage == 2 && moved) ++changed_s2;
  }
  CHECK(changed_s2 > 0);
  int changed_d = 0;
  for (const Param* p : tr.discriminator().params().all()) changed_d += p->value != d0.at(p->name);
  CHECK(changed_d > 0);
  for (const Param* p : tr.generator().params().all())
    for (double v : p->value) REQUIRE(static_cast<double>(static_cast<float>(v)) == v);
}

TEST_CASE("fade schedule follows the epoch counter") {
  Setup s = tiny();
  Trainer tr(s.g, s.d, s.t);
  CHECK(tr.alpha() == 1.0);
  tr.begin_stage(2);
  const auto hist = tr.train_epochs(s.lr, s.hr, 3);
  REQUIRE(hist.size() == 6);
  CHECK(hist[0].alpha == 0.0);
  CHECK(hist[2].alpha == 0.5);
  CHECK(hist[4].alpha == 1.0);
  CHECK(tr.epoch() == 3);
}

TEST_CASE("identical seeds give identical histories") {
  Setup s = tiny(9);
  Trainer a(s.g, s.d, s.t), b(s.g, s.d, s.t);
  const auto ha = a.train_epochs(s.lr, s.hr, 1);
  const auto hb = b.train_epochs(s.lr, s.hr, 1);
  for (std::size_t i = 0; i < ha.size(); ++i) CHECK(same(ha[i], hb[i]));
  CHECK(snapshot(a.generator().params()) == snapshot(b.generator().params()));
  Setup other = tiny(10);
  Trainer c(other.g, other.d, other.t);
  CHECK_FALSE(same(c.step(s.lr, s.hr), ha[0]));
}

TEST_CASE("resuming from a checkpoint continues bit-identically") {
  Setup s = tiny(5);
  oracle::TempDir dir("resume");
  Trainer a(s.g, s.d, s.t);
  a.train_epochs(s.lr, s.hr, 1);
  a.begin_stage(2);
  a.step(s.lr, s.hr);
  a.save_checkpoint(dir.path / "mid.octw");
  std::vector<StepRecord> rest;
  for (int i = 0; i < 3; ++i) rest.push_back(a.step(s.lr, s.hr));

  Trainer b(s.g, s.d, s.t);
  b.load_checkpoint(dir.path / "mid.octw");
  CHECK(b.stage() == 2);
  CHECK(b.iteration() == 3);
  for (int i = 0; i < 3; ++i) CHECK(same(b.step(s.lr, s.hr), rest[static_cast<std::size_t>(i)]));
  CHECK(snapshot(a.generator().params()) == snapshot(b.generator().params()));
  CHECK(snapshot(a.discriminator().params()) == snapshot(b.discriminator().params()));
  a.save_checkpoint(dir.path / "a.octw");
  b.save_checkpoint(dir.path / "b.octw");
  CHECK(oracle::file_bytes(dir.path / "a.octw") == oracle::file_bytes(dir.path / "b.octw"));

  GeneratorConfig wider = s.g;
  wider.widths = {5, 3};
  Trainer c(wider, DiscriminatorConfig::for_generator(wider, {4, 3}, 4), s.t);
  CHECK_THROWS_AS(c.load_checkpoint(dir.path / "mid.octw"), ShapeError);
}

TEST_CASE("non-finite losses stop training with a diagnostic checkpoint") {
  Setup s = tiny();
  oracle::TempDir dir("diag");
  Trainer tr(s.g, s.d, s.t);
  tr.diagnostic_dir = dir.path;
  tr.discriminator().params().at("fc.b").value[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(tr.step(s.lr, s.hr), Error);
  REQUIRE(std::filesystem::exists(dir.path / "diagnostic.octw"));
  const OctwFile f = load_octw(dir.path / "diagnostic.octw");
  CHECK(f.manifest.find("\"iteration\": 0") != std::string::npos);
}

TEST_CASE("loss history CSV") {
  Setup s = tiny();
  Trainer tr(s.g, s.d, s.t);
  auto hist = tr.train_stage(s.lr, s.hr, 1);
  const auto more = tr.train_stage(s.lr, s.hr, 2);
  hist.insert(hist.end(), more.begin(), more.end());
  std::ostringstream os;
  write_loss_history_csv(os, hist);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "iteration,stage,epoch,l_D,l_G,l_gp,l_vw,alpha");
  int rows = 0;
  while (std::getline(is, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == 7);
    CHECK(std::stoll(line.substr(0, line.find(','))) == rows);
    ++rows;
  }
  CHECK(rows == 4);
  CHECK(hist.back().stage == 2);
}

TEST_CASE("trainer rejects inconsistent configs") {
  Setup s = tiny();
  DiscriminatorConfig bad = s.d;
  bad.in_channels = 4;
  CHECK_THROWS_AS(Trainer(s.g, bad, s.t), ShapeError);
  TrainConfig t = s.t;
  t.batch_size = 0;
  CHECK_THROWS_AS(Trainer(s.g, s.d, t), ShapeError);
}
