// SPDX-License-Identifier: Apache-2.0
#include "octsr/volume.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "octsr/error.hpp"

namespace octsr {

std::string to_string(const Dims3& d) {
  std::ostringstream os;
  os << d.nx << "x" << d.ny << "x" << d.nz;
  return os.str();
}

namespace {

void check_dims(const Dims3& d) {
  if (d.nx <= 0 || d.ny <= 0 || d.nz <= 0)
    throw ShapeError("volume dims must be positive, got " + to_string(d));
}

}  // namespace

GrayVolume::GrayVolume(Dims3 dims, std::vector<std::uint16_t> data)
    : dims_(dims), data_(std::move(data)) {
  check_dims(dims_);
  if (static_cast<std::int64_t>(data_.size()) != dims_.count())
    throw ShapeError("gray volume payload does not match dims " + to_string(dims_));
}

LabelVolume::LabelVolume(Dims3 dims, int n_classes, std::vector<std::uint8_t> data)
    : dims_(dims), n_classes_(n_classes), data_(std::move(data)) {
  check_dims(dims_);
  if (n_classes_ < 1 || n_classes_ > 255) throw ShapeError("n_classes must be in [1, 255]");
  if (static_cast<std::int64_t>(data_.size()) != dims_.count())
    throw ShapeError("label volume payload does not match dims " + to_string(dims_));
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (data_[i] >= n_classes_)
      throw ShapeError("label " + std::to_string(data_[i]) + " at voxel " + std::to_string(i) +
                       " exceeds class count " + std::to_string(n_classes_));
  }
}

LabelVolume::LabelVolume(Dims3 dims, int n_classes, std::uint8_t fill)
    : LabelVolume(dims, n_classes,
                  std::vector<std::uint8_t>(static_cast<std::size_t>(std::max<std::int64_t>(dims.count(), 0)), fill)) {}

FeatureField::FeatureField(Dims3 dims, int channels, std::vector<double> data)
    : dims_(dims), channels_(channels), data_(std::move(data)) {
  check_dims(dims_);
  if (channels_ < 1) throw ShapeError("feature field needs at least one channel");
  if (static_cast<std::int64_t>(data_.size()) != dims_.count() * channels_)
    throw ShapeError("feature payload does not match dims " + to_string(dims_));
}

FeatureField::FeatureField(Dims3 dims, int channels)
    : FeatureField(dims, channels,
                   std::vector<double>(static_cast<std::size_t>(std::max<std::int64_t>(dims.count(), 0) *
                                                                std::max(channels, 0)))) {}

bool FeatureField::is_probability(double tol) const {
  const std::int64_t n = dims_.count();
  for (std::int64_t v = 0; v < n; ++v) {
    double s = 0.0;
    for (int c = 0; c < channels_; ++c) {
      const double p = at(v, c);
      if (!(p >= 0.0)) return false;
      s += p;
    }
    if (std::abs(s - 1.0) > tol) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

ThresholdTable::ThresholdTable(std::vector<std::string> phase_names,
                               std::vector<ThresholdRange> ranges)
    : names_(std::move(phase_names)), ranges_(std::move(ranges)) {
  if (names_.empty()) throw Error("threshold table needs at least one phase");
  std::sort(ranges_.begin(), ranges_.end(),
            [](const ThresholdRange& a, const ThresholdRange& b) { return a.lo < b.lo; });
  for (std::size_t i = 0; i < ranges_.size(); ++i) {
    const auto& r = ranges_[i];
    if (r.lo >= r.hi || r.hi > 65536)
      throw Error("threshold range [" + std::to_string(r.lo) + ", " + std::to_string(r.hi) +
                  ") is empty or exceeds 65536");
    if (r.phase >= names_.size())
      throw Error("threshold range refers to unknown phase " + std::to_string(r.phase));
    if (i > 0 && ranges_[i - 1].hi > r.lo)
      throw Error("threshold ranges overlap at intensity " + std::to_string(r.lo));
  }
}

ThresholdTable ThresholdTable::berea() {
  return ThresholdTable({"pore", "clay", "quartz", "feldspar"},
                        {{0, 4200, 0}, {4200, 4800, 1}, {4800, 7000, 2}, {7000, 8000, 3},
                         {8000, 65536, 2}});
}

bool ThresholdTable::covers_full_domain() const {
  std::uint32_t next = 0;
  for (const auto& r : ranges_) {
    if (r.lo != next) return false;
    next = r.hi;
  }
  return next == 65536;
}

std::optional<std::uint8_t> ThresholdTable::lookup(std::uint16_t intensity) const {
  auto it = std::upper_bound(ranges_.begin(), ranges_.end(), intensity,
                             [](std::uint32_t v, const ThresholdRange& r) { return v < r.lo; });
  if (it == ranges_.begin()) return std::nullopt;
  --it;
  if (intensity >= it->hi) return std::nullopt;
  return it->phase;
}

LabelVolume segment_grayscale(const GrayVolume& raw, const ThresholdTable& table) {
  std::vector<std::uint8_t> lut(65536);
  std::vector<bool> covered(65536, false);
  for (const auto& r : table.ranges()) {
    for (std::uint32_t i = r.lo; i < r.hi; ++i) {
      lut[i] = r.phase;
      covered[i] = true;
    }
  }
  const auto src = raw.data();
  std::vector<std::uint8_t> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!covered[src[i]])
      throw Error("intensity " + std::to_string(src[i]) + " at voxel " + std::to_string(i) +
                  " is not covered by the threshold table");
    out[i] = lut[src[i]];
  }
  return LabelVolume(raw.dims(), table.n_phases(), std::move(out));
}

// ---------------------------------------------------------------------------

FeatureField one_hot_encode(const LabelVolume& v) {
  const int c = v.n_classes();
  std::vector<double> data(static_cast<std::size_t>(v.dims().count() * c), 0.0);
  const auto labels = v.data();
  for (std::size_t i = 0; i < labels.size(); ++i) data[i * c + labels[i]] = 1.0;
  return FeatureField(v.dims(), c, std::move(data));
}

LabelVolume one_hot_decode(const FeatureField& f) {
  const int c = f.channels();
  if (c > 255) throw ShapeError("too many channels to decode into 8-bit labels");
  const std::int64_t n = f.dims().count();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(n));
  for (std::int64_t v = 0; v < n; ++v) {
    int best = 0;
    double best_val = f.at(v, 0);
    for (int k = 1; k < c; ++k) {
      if (f.at(v, k) > best_val) {
        best_val = f.at(v, k);
        best = k;
      }
    }
    out[static_cast<std::size_t>(v)] = static_cast<std::uint8_t>(best);
  }
  return LabelVolume(f.dims(), c, std::move(out));
}

namespace {

bool is_power_of_two(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

Dims3 reduced_dims(const Dims3& d, int factor) {
  if (!is_power_of_two(factor)) throw ShapeError("downsample factor must be a power of two");
  auto axis = [&](std::int64_t n, const char* name) {
    if (n == 1) return n;
    if (n % factor != 0)
      throw ShapeError(std::string("axis ") + name + " of " + to_string(d) +
                       " is not divisible by " + std::to_string(factor));
    return n / factor;
  };
  return {axis(d.nx, "x"), axis(d.ny, "y"), axis(d.nz, "z")};
}

// Source index of output voxel (x, y, z) under the corner convention.
struct CornerMap {
  Dims3 in, out;
  std::int64_t fx, fy, fz;
  CornerMap(const Dims3& i, const Dims3& o, int f)
      : in(i), out(o), fx(i.nx == 1 ? 1 : f), fy(i.ny == 1 ? 1 : f), fz(i.nz == 1 ? 1 : f) {}
  std::int64_t source(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return in.index(x * fx, y * fy, z * fz);
  }
};

}  // namespace

LabelVolume downsample_nearest(const LabelVolume& v, int factor) {
  const Dims3 out = reduced_dims(v.dims(), factor);
  CornerMap map(v.dims(), out, factor);
  std::vector<std::uint8_t> data(static_cast<std::size_t>(out.count()));
  std::size_t i = 0;
  for (std::int64_t z = 0; z < out.nz; ++z)
    for (std::int64_t y = 0; y < out.ny; ++y)
      for (std::int64_t x = 0; x < out.nx; ++x) data[i++] = v[map.source(x, y, z)];
  return LabelVolume(out, v.n_classes(), std::move(data));
}

FeatureField downsample_nearest(const FeatureField& f, int factor) {
  const Dims3 out = reduced_dims(f.dims(), factor);
  CornerMap map(f.dims(), out, factor);
  const int c = f.channels();
  std::vector<double> data(static_cast<std::size_t>(out.count() * c));
  std::size_t i = 0;
  for (std::int64_t z = 0; z < out.nz; ++z)
    for (std::int64_t y = 0; y < out.ny; ++y)
      for (std::int64_t x = 0; x < out.nx; ++x) {
        const auto src = f.voxel(map.source(x, y, z));
        std::copy(src.begin(), src.end(), data.begin() + static_cast<std::ptrdiff_t>(i));
        i += static_cast<std::size_t>(c);
      }
  return FeatureField(out, c, std::move(data));
}

LabelVolume upsample_replicate(const LabelVolume& v, int factor) {
  if (factor < 1) throw ShapeError("upsample factor must be positive");
  const Dims3& d = v.dims();
  auto up = [&](std::int64_t n) { return n == 1 ? n : n * factor; };
  const Dims3 out{up(d.nx), up(d.ny), up(d.nz)};
  const std::int64_t fx = d.nx == 1 ? 1 : factor, fy = d.ny == 1 ? 1 : factor,
                     fz = d.nz == 1 ? 1 : factor;
  std::vector<std::uint8_t> data(static_cast<std::size_t>(out.count()));
  std::size_t i = 0;
  for (std::int64_t z = 0; z < out.nz; ++z)
    for (std::int64_t y = 0; y < out.ny; ++y)
      for (std::int64_t x = 0; x < out.nx; ++x) data[i++] = v.at(x / fx, y / fy, z / fz);
  return LabelVolume(out, v.n_classes(), std::move(data));
}

PlaneStacks slice_planes(const FeatureField& f) {
  const Dims3& d = f.dims();
  const int c = f.channels();
  PlaneStacks out;
  auto copy_voxel = [&](std::vector<double>& dst, std::size_t at, std::int64_t src) {
    const auto s = f.voxel(src);
    std::copy(s.begin(), s.end(), dst.begin() + static_cast<std::ptrdiff_t>(at * c));
  };
  for (std::int64_t z = 0; z < d.nz; ++z) {
    std::vector<double> img(static_cast<std::size_t>(d.nx * d.ny * c));
    for (std::int64_t y = 0; y < d.ny; ++y)
      for (std::int64_t x = 0; x < d.nx; ++x)
        copy_voxel(img, static_cast<std::size_t>(x + d.nx * y), d.index(x, y, z));
    out.xy.emplace_back(Dims3{d.nx, d.ny, 1}, c, std::move(img));
  }
  for (std::int64_t x = 0; x < d.nx; ++x) {
    std::vector<double> img(static_cast<std::size_t>(d.ny * d.nz * c));
    for (std::int64_t z = 0; z < d.nz; ++z)
      for (std::int64_t y = 0; y < d.ny; ++y)
        copy_voxel(img, static_cast<std::size_t>(y + d.ny * z), d.index(x, y, z));
    out.yz.emplace_back(Dims3{d.ny, d.nz, 1}, c, std::move(img));
  }
  for (std::int64_t y = 0; y < d.ny; ++y) {
    std::vector<double> img(static_cast<std::size_t>(d.nx * d.nz * c));
    for (std::int64_t z = 0; z < d.nz; ++z)
      for (std::int64_t x = 0; x < d.nx; ++x)
        copy_voxel(img, static_cast<std::size_t>(x + d.nx * z), d.index(x, y, z));
    out.xz.emplace_back(Dims3{d.nx, d.nz, 1}, c, std::move(img));
  }
  return out;
}

LabelVolume median_filter3(const LabelVolume& v, int radius, int iterations) {
  if (radius < 1) throw Error("median filter radius must be >= 1");
  if (iterations < 1) throw Error("median filter iterations must be >= 1");
  const Dims3 d = v.dims();
  const int nc = v.n_classes();
  std::vector<std::uint8_t> cur(v.data().begin(), v.data().end());
  std::vector<std::uint8_t> next(cur.size());
  std::vector<int> hist(static_cast<std::size_t>(nc));
  for (int it = 0; it < iterations; ++it) {
    for (std::int64_t z = 0; z < d.nz; ++z) {
      const std::int64_t z0 = std::max<std::int64_t>(0, z - radius), z1 = std::min(d.nz - 1, z + radius);
      for (std::int64_t y = 0; y < d.ny; ++y) {
        const std::int64_t y0 = std::max<std::int64_t>(0, y - radius), y1 = std::min(d.ny - 1, y + radius);
        for (std::int64_t x = 0; x < d.nx; ++x) {
          const std::int64_t x0 = std::max<std::int64_t>(0, x - radius), x1 = std::min(d.nx - 1, x + radius);
          std::fill(hist.begin(), hist.end(), 0);
          for (std::int64_t zz = z0; zz <= z1; ++zz)
            for (std::int64_t yy = y0; yy <= y1; ++yy)
              for (std::int64_t xx = x0; xx <= x1; ++xx) ++hist[cur[static_cast<std::size_t>(d.index(xx, yy, zz))]];
          const std::size_t self = static_cast<std::size_t>(d.index(x, y, z));
          std::uint8_t best = cur[self];
          int best_count = hist[best];
          for (int k = 0; k < nc; ++k) {
            if (hist[static_cast<std::size_t>(k)] > best_count) {
              best_count = hist[static_cast<std::size_t>(k)];
              best = static_cast<std::uint8_t>(k);
            }
          }
          next[self] = best;
        }
      }
    }
    std::swap(cur, next);
  }
  return LabelVolume(d, nc, std::move(cur));
}

LabelVolume sample_subvolume(const LabelVolume& v, Coord3 origin, Dims3 size) {
  const Dims3& d = v.dims();
  if (size.nx < 1 || size.ny < 1 || size.nz < 1 || origin[0] < 0 || origin[1] < 0 || origin[2] < 0 ||
      origin[0] + size.nx > d.nx || origin[1] + size.ny > d.ny || origin[2] + size.nz > d.nz)
    throw ShapeError("subvolume " + to_string(size) + " at (" + std::to_string(origin[0]) + "," +
                     std::to_string(origin[1]) + "," + std::to_string(origin[2]) +
                     ") does not fit in " + to_string(d));
  std::vector<std::uint8_t> data(static_cast<std::size_t>(size.count()));
  std::size_t i = 0;
  for (std::int64_t z = 0; z < size.nz; ++z)
    for (std::int64_t y = 0; y < size.ny; ++y)
      for (std::int64_t x = 0; x < size.nx; ++x)
        data[i++] = v.at(origin[0] + x, origin[1] + y, origin[2] + z);
  return LabelVolume(size, v.n_classes(), std::move(data));
}

Coord3 sample_origin(const Dims3& dims, const Dims3& size, Rng& rng) {
  if (size.nx > dims.nx || size.ny > dims.ny || size.nz > dims.nz || size.nx < 1 || size.ny < 1 ||
      size.nz < 1)
    throw ShapeError("sample size " + to_string(size) + " does not fit in " + to_string(dims));
  Coord3 o;
  o[0] = static_cast<std::int64_t>(uniform_index(rng, static_cast<std::uint64_t>(dims.nx - size.nx + 1)));
  o[1] = static_cast<std::int64_t>(uniform_index(rng, static_cast<std::uint64_t>(dims.ny - size.ny + 1)));
  o[2] = static_cast<std::int64_t>(uniform_index(rng, static_cast<std::uint64_t>(dims.nz - size.nz + 1)));
  return o;
}

LabelVolume sample_subvolume(const LabelVolume& v, Dims3 size, Rng& rng) {
  return sample_subvolume(v, sample_origin(v.dims(), size, rng), size);
}

std::uint8_t label_gray(std::uint8_t label) {
  switch (label) {
    case 0: return 0;     // pore
    case 1: return 192;   // clay
    case 2: return 64;    // quartz
    case 3: return 128;   // feldspar
    default: return 255;  // mixed and anything beyond
  }
}

}  // namespace octsr
