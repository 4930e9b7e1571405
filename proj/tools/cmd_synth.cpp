// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <iostream>
#include <memory>

#include "commands.hpp"
#include "octsr/random.hpp"
#include "octsr/volume.hpp"
#include "run_manifest.hpp"

namespace octsr::cli {

namespace {

struct SynthOptions {
  std::string kind = "spheres";
  std::vector<std::int64_t> dims{64};
  std::string out;
  std::uint64_t seed = 0;
  double pore = 0.2;
};

// Representative intensities inside the Berea ranges.
constexpr std::uint16_t kPoreGray = 2000, kClayGray = 4500, kQuartzGray = 6000, kFeldsparGray = 7500;

GrayVolume ramp(const Dims3& d) {
  std::vector<std::uint16_t> data(static_cast<std::size_t>(d.count()));
  const double span = static_cast<double>(std::max<std::int64_t>(d.nx - 1, 1));
  for (std::int64_t z = 0; z < d.nz; ++z)
    for (std::int64_t y = 0; y < d.ny; ++y)
      for (std::int64_t x = 0; x < d.nx; ++x)
        data[static_cast<std::size_t>(d.index(x, y, z))] = static_cast<std::uint16_t>(std::lround(65535.0 * x / span));
  return GrayVolume(d, std::move(data));
}

GrayVolume spheres(const Dims3& d, double pore, Rng& rng) {
  std::vector<std::uint16_t> data(static_cast<std::size_t>(d.count()), kQuartzGray);
  const double rmax = std::max(2.0, std::min({d.nx, d.ny, d.nz == 1 ? d.nx : d.nz}) / 10.0);
  auto paint = [&](std::uint16_t value, double target) {
    std::int64_t painted = 0;
    const auto want = static_cast<std::int64_t>(target * static_cast<double>(d.count()));
    while (painted < want) {
      const double cx = uniform01(rng) * d.nx, cy = uniform01(rng) * d.ny, cz = uniform01(rng) * d.nz;
      const double r = 1.0 + uniform01(rng) * (rmax - 1.0);
      const auto lo = [r](double c) { return std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(c - r))); };
      const auto hi = [r](double c, std::int64_t n) { return std::min<std::int64_t>(n - 1, static_cast<std::int64_t>(std::ceil(c + r))); };
      for (std::int64_t z = lo(cz); z <= hi(cz, d.nz); ++z)
        for (std::int64_t y = lo(cy); y <= hi(cy, d.ny); ++y)
          for (std::int64_t x = lo(cx); x <= hi(cx, d.nx); ++x) {
            const double dx = x + 0.5 - cx, dy = y + 0.5 - cy, dz = d.nz == 1 ? 0.0 : z + 0.5 - cz;
            auto& v = data[static_cast<std::size_t>(d.index(x, y, z))];
            if (dx * dx + dy * dy + dz * dz <= r * r && v == kQuartzGray) {
              v = value;
              ++painted;
            }
          }
    }
  };
  paint(kPoreGray, pore);
  paint(kFeldsparGray, 0.05);
  paint(kClayGray, 0.03);
  for (auto& v : data) v = static_cast<std::uint16_t>(v + static_cast<int>(uniform_index(rng, 301)) - 150);
  return GrayVolume(d, std::move(data));
}

void run_synth(const SynthOptions& o, const Globals& g) {
  if (o.dims.size() != 1 && o.dims.size() != 3) throw UsageError("--dims takes one edge or three extents");
  const Dims3 d = o.dims.size() == 1 ? Dims3{o.dims[0], o.dims[0], o.dims[0]} : Dims3{o.dims[0], o.dims[1], o.dims[2]};
  if (d.nx <= 0 || d.ny <= 0 || d.nz <= 0) throw UsageError("--dims must be positive");
  Rng rng(o.seed);
  const GrayVolume v = o.kind == "ramp" ? ramp(d) : spheres(d, o.pore, rng);
  save_vvol(o.out, v);
  RunManifest manifest("synth");
  manifest.set_seed(o.seed);
  manifest.config()["kind"] = o.kind;
  manifest.config()["dims"] = {d.nx, d.ny, d.nz};
  if (o.kind != "ramp") manifest.config()["pore"] = o.pore;
  manifest.add_output(o.out);
  manifest.write_beside(o.out, 1);
  if (!g.quiet) std::cout << "wrote " << o.kind << ' ' << to_string(d) << " grayscale volume\n";
}

}  // namespace

void add_synth(CLI::App& app, const Globals& g) {
  auto o = std::make_shared<SynthOptions>();
  auto* cmd = app.add_subcommand("synth", "Write a synthetic u16 grayscale volume for smoke tests");
  cmd->add_option("--kind", o->kind, "ramp: intensity rises along x; spheres: pore, clay and feldspar blobs in quartz")
      ->capture_default_str()
      ->check(CLI::IsMember({"ramp", "spheres"}));
  cmd->add_option("--dims", o->dims, "Edge, or nx ny nz (nz = 1 for an image)")->capture_default_str()->expected(1, 3);
  cmd->add_option("--pore", o->pore, "Target pore fraction for spheres")->capture_default_str()->check(CLI::Range(0.0, 0.9));
  cmd->add_option("--seed", o->seed, "Random seed")->capture_default_str();
  cmd->add_option("--out", o->out, "Grayscale VVOL output")->required();
  cmd->callback([o, &g] { run_synth(*o, g); });
}

}  // namespace octsr::cli
