// SPDX-License-Identifier: Apache-2.0
#include "octsr/generator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "octsr/error.hpp"

namespace octsr {

void GeneratorConfig::validate() const {
  std::vector<std::string> bad;
  if (stages < 1) bad.push_back("stages must be >= 1");
  if (input_edge < 1) bad.push_back("input_edge must be >= 1");
  if (static_cast<int>(widths.size()) != stages)
    bad.push_back("widths has " + std::to_string(widths.size()) + " entries for " + std::to_string(stages) + " stages");
  for (std::size_t i = 0; i < widths.size(); ++i)
    if (widths[i] < 1) bad.push_back("widths[" + std::to_string(i) + "] must be positive");
  if (phases < 1 || phases > 254) bad.push_back("phases must be in [1, 254]");
  if (noise_channels < 0 || noise_channels > 1) bad.push_back("noise_channels must be 0 or 1");
  if (first_kernel < 1 || first_kernel % 2 == 0) bad.push_back("first_kernel must be odd");
  if (conv_kernel < 1 || conv_kernel % 2 == 0) bad.push_back("conv_kernel must be odd");
  if (!(norm_eps > 0.0)) bad.push_back("norm_eps must be positive");
  if (!(norm_momentum >= 0.0 && norm_momentum <= 1.0)) bad.push_back("norm_momentum must be in [0, 1]");
  if (bad.empty()) return;
  std::string msg = "invalid generator config:";
  for (const auto& b : bad) msg += "\n  " + b;
  throw ShapeError(msg);
}

GeneratorConfig GeneratorConfig::reference() { return GeneratorConfig{}; }

GeneratorConfig GeneratorConfig::desk() {
  GeneratorConfig c;
  c.stages = 3;
  c.input_edge = 8;
  c.widths = {32, 32, 16};
  return c;
}

// ---------------------------------------------------------------------------

namespace {

std::string stage_prefix(int s) { return "s" + std::to_string(s) + "."; }

struct LayerPlan {
  int stage;
  std::string name;  // parameter prefix
  std::string kind;
  int taps = 0, cin = 0, cout = 0;  // convolutions
  int channels = 0;                 // norms
};

std::vector<LayerPlan> plan_layers(const GeneratorConfig& c) {
  std::vector<LayerPlan> out;
  const int k1 = c.first_kernel * c.first_kernel * c.first_kernel;
  const int k3 = c.conv_kernel * c.conv_kernel * c.conv_kernel;
  const int cls = c.class_channels();
  for (int s = 1; s <= c.stages; ++s) {
    const std::string p = stage_prefix(s);
    const int w = c.widths[static_cast<std::size_t>(s - 1)];
    if (s == 1) {
      out.push_back({s, p + "conv0", "conv3d", k1, c.input_channels(), w, 0});
      out.push_back({s, p + "norm0", "instance_norm", 0, 0, 0, w});
      out.push_back({s, p + "conv1", "conv3d", k3, w, w, 0});
      out.push_back({s, p + "norm1", "instance_norm", 0, 0, 0, w});
      out.push_back({s, p + "conv2", "sparse_conv3d", k3, w, w, 0});
      out.push_back({s, p + "norm2", "batch_norm", 0, 0, 0, w});
    } else {
      const int wp = c.widths[static_cast<std::size_t>(s - 2)];
      out.push_back({s, p + "up", "sparse_conv_transpose3d", 8, wp, wp, 0});
      out.push_back({s, p + "norm0", "batch_norm", 0, 0, 0, wp});
      out.push_back({s, p + "conv1", "sparse_conv3d", k3, wp, w, 0});
      out.push_back({s, p + "norm1", "batch_norm", 0, 0, 0, w});
      out.push_back({s, p + "conv2", "sparse_conv3d", k3, w, w, 0});
      out.push_back({s, p + "norm2", "batch_norm", 0, 0, 0, w});
    }
    out.push_back({s, p + "cls", "classifier", 1, w, cls, 0});
  }
  return out;
}

bool is_norm(const LayerPlan& l) { return l.kind == "instance_norm" || l.kind == "batch_norm"; }

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Generator::Generator(GeneratorConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  for (const auto& l : plan_layers(cfg_)) {
    if (is_norm(l)) {
      params_.create(l.name + ".gamma", {l.channels}, l.stage, 1.0);
      params_.create(l.name + ".beta", {l.channels}, l.stage, 0.0);
      if (l.kind == "batch_norm") {
        params_.create(l.name + ".running_mean", {l.channels}, l.stage, 0.0).trainable = false;
        params_.create(l.name + ".running_var", {l.channels}, l.stage, 1.0).trainable = false;
      }
    } else {
      params_.create(l.name + ".w", {l.taps, l.cin, l.cout}, l.stage);
      params_.create(l.name + ".b", {l.cout}, l.stage);
      // Inputs feeding one output: a transposed conv child sees a single tap.
      const std::int64_t fan = l.kind == "sparse_conv_transpose3d" ? l.cin : std::int64_t{l.taps} * l.cin;
      fan_in_[l.name + ".w"] = fan;
      fan_in_[l.name + ".b"] = fan;
    }
  }
  init_weights(init_seed);
}

void Generator::init_weights(std::uint64_t seed) {
  Rng rng(seed);
  for (Param* p : params_.all()) {
    auto it = fan_in_.find(p->name);
    if (it != fan_in_.end()) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(it->second));
      for (auto& v : p->value) v = to_float_precision((2.0 * uniform01(rng) - 1.0) * bound);
    } else if (ends_with(p->name, ".gamma") || ends_with(p->name, ".running_var")) {
      std::fill(p->value.begin(), p->value.end(), 1.0);
    } else {
      std::fill(p->value.begin(), p->value.end(), 0.0);
    }
  }
}

void Generator::zero_weights() {
  for (Param* p : params_.all())
    if (fan_in_.count(p->name)) std::fill(p->value.begin(), p->value.end(), 0.0);
}

std::vector<LayerCount> Generator::layer_counts() const {
  std::vector<LayerCount> out;
  for (const auto& l : plan_layers(cfg_)) {
    const std::int64_t n = is_norm(l) ? 2 * std::int64_t{l.channels}
                                      : std::int64_t{l.taps} * l.cin * l.cout + l.cout;
    out.push_back({l.stage, l.name, l.kind, n});
  }
  return out;
}

std::int64_t Generator::count_params() const {
  std::int64_t n = 0;
  for (const auto& l : layer_counts()) n += l.params;
  return n;
}

void Generator::apply_norm_updates(const std::vector<RunningUpdate>& updates) {
  const double m = cfg_.norm_momentum;
  for (const auto& u : updates) {
    auto& mean = params_.at(u.layer + ".running_mean").value;
    auto& var = params_.at(u.layer + ".running_var").value;
    for (std::size_t k = 0; k < mean.size(); ++k) {
      mean[k] = to_float_precision((1.0 - m) * mean[k] + m * u.mean[k]);
      var[k] = to_float_precision((1.0 - m) * var[k] + m * u.variance[k]);
    }
  }
}

GeneratorForward Generator::forward(Tape& t, Var input, const Options& opt) const {
  const GeneratorConfig& c = cfg_;
  const int n_stages = opt.stages < 0 ? c.stages : opt.stages;
  if (n_stages < 1 || n_stages > c.stages)
    throw ShapeError("generator has " + std::to_string(c.stages) + " stages, asked to run " + std::to_string(n_stages));
  const Shape& is = t.shape(input);
  const std::int64_t e = c.input_edge;
  if (is.size() != 5 || is[1] != e || is[2] != e || is[3] != e || is[4] != c.input_channels())
    throw ShapeError("generator input must be [B, " + std::to_string(e) + ", " + std::to_string(e) + ", " +
                     std::to_string(e) + ", " + std::to_string(c.input_channels()) + "], got " + shape_string(is));
  const int batch = static_cast<int>(is[0]);
  const int n_cls = c.class_channels();

  GeneratorForward result;
  auto param = [&](const std::string& name, int stage) -> Var {
    const Param& p = params_.at(name);
    if (opt.grad && stage >= opt.trainable_from) return t.param(const_cast<Param&>(p));
    return t.constant(Tensor(p.shape, p.value));
  };
  auto conv = [&](const SparseVar& x, const std::string& name, int stage, const KernelMap& map) {
    return sparse_conv3(t, x, param(name + ".w", stage), param(name + ".b", stage), map);
  };
  auto norm = [&](const SparseVar& x, const std::string& name, int stage, bool instance) -> SparseVar {
    Var g = param(name + ".gamma", stage), b = param(name + ".beta", stage);
    if (instance) return {x.coords, normalize_rows(t, x.features, x.coords->batch_of_rows(), batch, g, b, c.norm_eps)};
    const auto n = x.coords->size();
    if (!opt.training) {
      return {x.coords, normalize_rows_fixed(t, x.features, params_.at(name + ".running_mean").value,
                                             params_.at(name + ".running_var").value, g, b, c.norm_eps)};
    }
    NormStats st;
    Var y = normalize_rows(t, x.features, std::vector<int>(static_cast<std::size_t>(n), 0), 1, g, b, c.norm_eps, &st);
    if (opt.record_norm_updates && stage >= opt.trainable_from) {
      const double corr = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
      for (auto& v : st.variance) v *= corr;
      result.norm_updates.push_back({name, std::move(st.mean), std::move(st.variance)});
    }
    return {x.coords, y};
  };
  auto empty = [&](std::int64_t grid, std::int64_t channels) {
    return SparseVar{std::make_shared<const CoordSet>(batch, grid, std::vector<SparseCoord>{}),
                     t.constant(Tensor(Shape{0, channels}))};
  };

  std::vector<SparseVar> memorized;
  SparseVar carry;
  for (int s = 1; s <= n_stages; ++s) {
    const std::string p = stage_prefix(s);
    const std::int64_t g = c.stage_edge(s);
    const int w = c.widths[static_cast<std::size_t>(s - 1)];
    SparseVar feat;
    if (s == 1) {
      auto coords = CoordSet::full_grid(batch, e);
      SparseVar x{coords, reshape(t, input, Shape{batch * e * e * e, c.input_channels()})};
      const KernelMap k_first = build_kernel_map(*coords, c.first_kernel);
      const KernelMap k_conv = build_kernel_map(*coords, c.conv_kernel);
      feat = sparse_relu(t, norm(conv(x, p + "conv0", s, k_first), p + "norm0", s, true));
      feat = sparse_relu(t, norm(conv(feat, p + "conv1", s, k_conv), p + "norm1", s, true));
      feat = sparse_relu(t, norm(conv(feat, p + "conv2", s, k_conv), p + "norm2", s, false));
    } else if (carry.coords->empty()) {
      feat = empty(g, w);
    } else {
      SparseVar up = sparse_transpose_conv3_generative(t, carry, param(p + "up.w", s), param(p + "up.b", s));
      up = sparse_relu(t, norm(up, p + "norm0", s, false));
      const KernelMap k_conv = build_kernel_map(*up.coords, c.conv_kernel);
      feat = sparse_relu(t, norm(conv(up, p + "conv1", s, k_conv), p + "norm1", s, false));
      feat = sparse_relu(t, norm(conv(feat, p + "conv2", s, k_conv), p + "norm2", s, false));
    }

    StageOutput out;
    out.stage = s;
    out.grid_edge = g;
    if (feat.coords->empty()) {
      out.probs = empty(g, n_cls);
    } else {
      SparseVar logits = sparse_conv3(t, feat, param(p + "cls.w", s), param(p + "cls.b", s), 1);
      out.probs = sparse_softmax(t, logits);
    }
    const auto n = out.probs.coords->size();
    std::vector<bool> mask(static_cast<std::size_t>(n), false);
    if (s < c.stages) {
      const auto& pv = t.value(out.probs.features).data;
      for (std::int64_t i = 0; i < n; ++i) {
        const double* row = pv.data() + i * n_cls;
        const auto best = std::max_element(row, row + n_cls) - row;
        mask[static_cast<std::size_t>(i)] = best == c.mixed_channel();
      }
    }
    std::vector<bool> keep(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) keep[i] = !mask[i];
    out.mixed = prune(t, feat, mask);
    out.memorized = prune(t, out.probs, keep);
    out.node_count = n;
    out.mixed_count = out.mixed.coords->size();
    out.dense_count = out.memorized.coords->size();
    if (opt.reconstruct_all || s == n_stages) out.dense = reconstruct_dense(t, out.probs, memorized);
    memorized.push_back(out.memorized);
    carry = out.mixed;
    result.stages.push_back(std::move(out));
  }
  return result;
}

// ---------------------------------------------------------------------------

void append_generator_input(Tensor& batch, const GeneratorConfig& cfg, const LabelVolume& lr, Rng& rng) {
  const std::int64_t e = cfg.input_edge;
  if (!(lr.dims() == Dims3{e, e, e}))
    throw ShapeError("generator input volume must be " + std::to_string(e) + "^3, got " + to_string(lr.dims()));
  const int ch = cfg.input_channels();
  if (batch.shape.empty()) batch = Tensor(Shape{0, e, e, e, ch});
  if (batch.shape.size() != 5 || batch.shape[4] != ch) throw ShapeError("generator input batch has the wrong shape");
  const std::int64_t n = lr.dims().count();
  const std::size_t base = batch.data.size();
  batch.data.resize(base + static_cast<std::size_t>(n * ch), 0.0);
  for (std::int64_t v = 0; v < n; ++v) {
    const int label = lr[v];
    if (label >= cfg.phases)
      throw ShapeError("label " + std::to_string(label) + " at voxel " + std::to_string(v) + " exceeds the " +
                       std::to_string(cfg.phases) + " generator phases");
    double* row = batch.data.data() + base + static_cast<std::size_t>(v * ch);
    row[label] = 1.0;
    if (cfg.noise_channels == 1) row[cfg.phases] = uniform01(rng);
  }
  batch.shape[0] += 1;
}

Tensor generator_input(const GeneratorConfig& cfg, const LabelVolume& lr, Rng& rng) {
  Tensor t;
  append_generator_input(t, cfg, lr, rng);
  return t;
}

GenerateResult generate(const Generator& gen, const LabelVolume& lr, std::uint64_t seed) {
  const GeneratorConfig& c = gen.config();
  Rng rng(seed);
  Tape t;
  Var x = t.constant(generator_input(c, lr, rng));
  Generator::Options opt;
  opt.reconstruct_all = false;
  const auto fw = gen.forward(t, x, opt);
  const std::int64_t g = c.output_edge();
  const int n_cls = c.class_channels();
  GenerateResult r;
  const auto& dense = t.value(fw.stages.back().dense).data;
  r.probabilities = FeatureField(Dims3{g, g, g}, n_cls, dense);
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(g * g * g));
  for (std::size_t v = 0; v < labels.size(); ++v) {
    const double* row = dense.data() + v * static_cast<std::size_t>(n_cls);
    labels[v] = static_cast<std::uint8_t>(std::max_element(row, row + c.phases) - row);
  }
  r.labels = LabelVolume(Dims3{g, g, g}, c.phases, std::move(labels));
  for (const auto& s : fw.stages) r.counts.push_back({s.dense_count, s.mixed_count});
  return r;
}

LabelVolume superresolve_chunked(const Generator& gen, const LabelVolume& lr, std::uint64_t seed, int threads) {
  const GeneratorConfig& c = gen.config();
  const std::int64_t e = c.input_edge;
  const Dims3& d = lr.dims();
  if (d.nx % e != 0 || d.ny % e != 0 || d.nz % e != 0)
    throw ShapeError("input " + to_string(d) + " is not divisible into " + std::to_string(e) + "^3 chunks");
  const std::int64_t f = std::int64_t{1} << (c.stages - 1);
  const Dims3 od{d.nx * f, d.ny * f, d.nz * f};
  const std::int64_t cx = d.nx / e, cy = d.ny / e, cz = d.nz / e;
  const std::int64_t n_chunks = cx * cy * cz;
  std::vector<std::uint8_t> out(static_cast<std::size_t>(od.count()));
  const std::int64_t oe = e * f;

  std::atomic<std::int64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::int64_t i = next.fetch_add(1);
      if (i >= n_chunks) return;
      try {
        const std::int64_t ix = i % cx, iy = (i / cx) % cy, iz = i / (cx * cy);
        const LabelVolume chunk = sample_subvolume(lr, Coord3{ix * e, iy * e, iz * e}, Dims3{e, e, e});
        const LabelVolume sr = generate(gen, chunk, seed ^ static_cast<std::uint64_t>(i)).labels;
        for (std::int64_t z = 0; z < oe; ++z)
          for (std::int64_t y = 0; y < oe; ++y)
            for (std::int64_t x = 0; x < oe; ++x)
              out[static_cast<std::size_t>(od.index(ix * oe + x, iy * oe + y, iz * oe + z))] = sr.at(x, y, z);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n_chunks);
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(threads, static_cast<int>(n_chunks)));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < n_threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return LabelVolume(od, c.phases, std::move(out));
}

}  // namespace octsr
