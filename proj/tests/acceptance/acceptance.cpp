// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Prints one line per criterion and exits nonzero when any
// criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <string>

#include "octsr/checkpoint.hpp"
#include "octsr/dense.hpp"
#include "octsr/discriminator.hpp"
#include "octsr/generator.hpp"
#include "octsr/losses.hpp"
#include "octsr/membudget.hpp"
#include "octsr/metrics.hpp"
#include "octsr/octree.hpp"
#include "octsr/pgdata.hpp"
#include "octsr/sparse.hpp"
#include "octsr/trainer.hpp"
#include "octsr/volume.hpp"
#include "oracles.hpp"
#include "reference_tables.hpp"

using namespace octsr;

namespace {

const std::filesystem::path kData(OCTSR_DATA_DIR);

struct Outcome {
  bool pass = true;
  std::string detail;
  std::string output;  // serialized results, compared across reruns

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail.clear();
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

template <typename F>
double seconds(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void append_bytes(std::string& out, const LabelVolume& v) {
  out.append(reinterpret_cast<const char*>(v.data().data()), v.data().size());
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

// ---------------------------------------------------------------------------

Outcome parameter_counts() {
  Outcome o;
  const double t = seconds([&] {
    const Generator g(GeneratorConfig::reference());
    const Discriminator d(DiscriminatorConfig::reference());
    auto check = [&](const std::vector<LayerCount>& got, const std::vector<fixtures::CountRow>& want, const char* who) {
      o.require(got.size() == want.size(), std::string(who) + " layer count differs");
      for (std::size_t i = 0; i < std::min(got.size(), want.size()); ++i)
        o.require(got[i].name == want[i].layer && got[i].params == want[i].params,
                  std::string(who) + " " + want[i].layer + ": got " + std::to_string(got[i].params));
    };
    check(g.layer_counts(), fixtures::generator_counts(), "generator");
    check(d.layer_counts(), fixtures::critic_counts(), "critic");
    const double gm = std::round(static_cast<double>(g.count_params()) / 1e5) / 10.0;
    const double dm = std::round(static_cast<double>(d.count_params()) / 1e5) / 10.0;
    o.require(gm == fixtures::kGeneratorMillions, "generator total " + std::to_string(g.count_params()));
    o.require(dm == fixtures::kCriticMillions, "critic total " + std::to_string(d.count_params()));
    o.detail = "generator " + std::to_string(g.count_params()) + " (" + fmt("%.1f", gm) + "M), critic " +
               std::to_string(d.count_params()) + " (" + fmt("%.1f", dm) + "M)";
  });
  o.require(t < 1.0, "took " + fmt("%.2f s", t));
  return o;
}

Outcome memory_ledger() {
  Outcome o;
  const double t = seconds([&] {
    const auto arch = load_architecture(kData / "dense_reference_arch.json");
    const auto ledger = estimate_dense_memory(arch, 2.0);
    std::ifstream is(kData / "dense_reference_ledger.csv");
    std::string line;
    std::getline(is, line);
    std::size_t i = 0;
    double worst = 0.0;
    while (std::getline(is, line)) {
      std::stringstream ss(line);
      std::string row, p, inc, cum;
      std::getline(ss, row, ',');
      std::getline(ss, p, ',');
      std::getline(ss, inc, ',');
      std::getline(ss, cum, ',');
      if (i >= ledger.rows.size()) break;
      const auto& r = ledger.rows[i++];
      o.require(r.params == std::stoll(p), "row " + row + " params");
      worst = std::max({worst, std::fabs(r.incremental_gb - std::stod(inc)), std::fabs(r.cumulative_gb - std::stod(cum))});
    }
    o.require(i == 31 && ledger.rows.size() == 31, "expected 31 ledger rows");
    o.require(worst <= 0.005 + 1e-12, "worst row deviation " + fmt("%.4f GB", worst));
    o.require(std::fabs(ledger.total_gb() - 342.101) <= 0.005, "final " + fmt("%.4f GB", ledger.total_gb()));
    const auto report = compare_report(ledger, ledger, 80.0);
    const int oom = first_oom_stage(report);
    o.require(oom == 4, "first OOM stage " + std::to_string(oom));
    o.detail = "final " + fmt("%.4f GB", ledger.total_gb()) + ", worst row deviation " + fmt("%.4f GB", worst) +
               ", OOM at stage " + std::to_string(oom) + " of 80 GB";
  });
  o.require(t < 1.0, "took " + fmt("%.2f s", t));
  return o;
}

Outcome octree_conservation(std::uint64_t seed) {
  Outcome o;
  Rng rng(seed);
  int volumes = 0;
  const double t = seconds([&] {
    for (int i = 0; i < 200; ++i) {
      const std::int64_t n = std::int64_t{16} << uniform_index(rng, 3);
      const int block = 1 << uniform_index(rng, 4);
      const int classes = 2 + static_cast<int>(uniform_index(rng, 3));
      const LabelVolume v = i % 2 == 0 ? oracle::random_blocky({n, n, n}, classes, block, rng)
                                       : oracle::random_spheres({n, n, n}, classes, 0.1 + 0.3 * uniform01(rng), rng);
      const int root = 1 << uniform_index(rng, 2);
      const int levels = std::bit_width(static_cast<std::uint64_t>(n / root)) - 1 - static_cast<int>(uniform_index(rng, 2));
      const auto stats = level_stats(build_octree(v, levels, root));
      o.require(satisfies_node_conservation(stats), "volume " + std::to_string(i) + " violates conservation");
      for (std::size_t l = 1; l < stats.size(); ++l)
        o.require(stats[l].dense_count + stats[l].mixed_count == 8 * stats[l - 1].mixed_count,
                  "volume " + std::to_string(i) + " level " + std::to_string(l));
      for (const auto& s : stats) o.output += std::to_string(s.dense_count) + "/" + std::to_string(s.mixed_count) + " ";
      o.output += "\n";
      ++volumes;
    }
    const auto fixture = load_stage_counts_csv(kData / "berea_node_counts.csv");
    const auto fs = level_stats(fixture, 32);
    o.require(fixture.size() == 5 && satisfies_node_conservation(fs), "node-count fixture");
    o.require(fixture[1].dense + fixture[1].mixed == 8 * fixture[0].mixed, "36103 + 40137 != 8 * 9530");
  });
  o.require(t < 30.0, "took " + fmt("%.1f s", t));
  if (o.pass) o.detail = std::to_string(volumes) + " volumes and 5 fixture rows conserve nodes in " + fmt("%.1f s", t);
  return o;
}

Outcome round_trips() {
  Outcome o;
  Rng rng(4004);
  int exact = 0;
  for (int i = 0; i < 100; ++i) {
    const std::int64_t n = std::int64_t{8} << uniform_index(rng, 3);
    const LabelVolume v = oracle::random_blocky({n, n, n}, 2 + static_cast<int>(uniform_index(rng, 4)),
                                                1 << uniform_index(rng, 3), rng);
    const int levels = 1 + static_cast<int>(uniform_index(rng, 3));
    const bool same = reconstruct_dense(build_octree(v, levels, 1)) == v;
    o.require(same, "octree round trip " + std::to_string(i));
    exact += same;
  }
  oracle::TempDir dir("accept_io");
  auto stable = [&](const char* name, const std::function<void(const std::filesystem::path&)>& save,
                    const std::function<void(const std::filesystem::path&, const std::filesystem::path&)>& reload) {
    const auto a = dir / (std::string(name) + ".a"), b = dir / (std::string(name) + ".b");
    save(a);
    reload(a, b);
    o.require(oracle::file_bytes(a) == oracle::file_bytes(b) && !oracle::file_bytes(a).empty(),
              std::string(name) + " not byte-identical");
  };
  const LabelVolume labels = oracle::random_labels({9, 7, 5}, 4, rng);
  stable("vvol_labels", [&](auto& p) { save_vvol(p, labels); },
         [&](auto& a, auto& b) {
           const LabelVolume back = load_vvol_labels(a);
           o.require(back == labels, "VVOL labels differ");
           save_vvol(b, back);
         });
  std::vector<std::uint16_t> raw(6 * 5 * 4);
  for (auto& g : raw) g = static_cast<std::uint16_t>(uniform_index(rng, 65536));
  const GrayVolume gray({6, 5, 4}, raw);
  stable("vvol_gray", [&](auto& p) { save_vvol(p, gray); },
         [&](auto& a, auto& b) { save_vvol(b, load_vvol_gray(a)); });
  const FeatureField feat = one_hot_encode(labels);
  stable("vvol_features", [&](auto& p) { save_vvol(p, feat); },
         [&](auto& a, auto& b) {
           const FeatureField back = load_vvol_features(a);
           o.require(back == feat, "VVOL features differ");
           save_vvol(b, back);
         });
  const auto sets = octree_node_sets(build_octree(oracle::random_blocky({32, 32, 32}, 3, 4, rng), 3, 1));
  stable("svox", [&](auto& p) { save_svox(p, sets); },
         [&](auto& a, auto& b) { save_svox(b, load_svox(a)); });
  const Generator gen(GeneratorConfig::desk(), 77);
  stable("octw", [&](auto& p) {
           OctwFile f;
           gen.params().export_to(f, "g.", 3);
           f.manifest = "{\"note\": \"acceptance\"}";
           save_octw(p, f);
         },
         [&](auto& a, auto& b) {
           Generator other(GeneratorConfig::desk(), 78);
           const OctwFile f = load_octw(a);
           o.require(other.params().import_from(f, "g.") == gen.params().size(), "OCTW import count");
           OctwFile g;
           other.params().export_to(g, "g.", 3);
           g.manifest = f.manifest;
           save_octw(b, g);
         });
  if (o.pass) o.detail = std::to_string(exact) + "/100 octree reconstructions bit-identical; VVOL, SVOX, OCTW byte-identical";
  return o;
}

Outcome operator_oracles() {
  Outcome o;
  Rng rng(5005);
  double worst = 0.0;
  int cases = 0;
  auto note = [&](double err, const std::string& what) {
    worst = std::max(worst, err);
    ++cases;
    o.require(err < 1e-9, what + " error " + fmt("%.3g", err));
  };
  for (int g = 2; g <= 6; ++g)
    for (int k : {1, 3, 5}) {
      const int b = 2, cin = 3, cout = 2;
      const Tensor x = oracle::random_tensor({b * g * g * g, cin}, rng);
      const Tensor w = oracle::random_tensor({k * k * k, cin, cout}, rng);
      const Tensor bias = oracle::random_tensor({cout}, rng);
      Tape t;
      const auto y = sparse_conv3(t, {CoordSet::full_grid(b, g), t.input(x)}, t.input(w), t.input(bias), k);
      note(oracle::max_abs_diff(t.value(y.features).data, oracle::conv3d_same(x.data, b, g, cin, w.data, k, cout, bias.data)),
           "sparse conv");
    }
  for (int g = 1; g <= 3; ++g) {
    const int b = 2, cin = 3, cout = 4;
    const Tensor x = oracle::random_tensor({b * g * g * g, cin}, rng);
    const Tensor w = oracle::random_tensor({8, cin, cout}, rng);
    const Tensor bias = oracle::random_tensor({cout}, rng);
    Tape t;
    const auto y = sparse_transpose_conv3_generative(t, {CoordSet::full_grid(b, g), t.input(x)}, t.input(w), t.input(bias));
    note(oracle::max_abs_diff(t.value(y.features).data, oracle::conv_transpose3d_k2(x.data, b, g, cin, w.data, cout, bias.data)),
         "transposed conv");
  }
  {
    const int b = 2, g = 4, c = 3;
    const auto cs = CoordSet::full_grid(b, g);
    const std::int64_t n = cs->size();
    const Tensor x = oracle::random_tensor({n, c}, rng);
    const Tensor gamma = oracle::random_tensor({c}, rng), beta = oracle::random_tensor({c}, rng);
    for (int mode = 0; mode < 2; ++mode) {
      const std::vector<int> groups = mode == 0 ? std::vector<int>(static_cast<std::size_t>(n), 0) : cs->batch_of_rows();
      const int n_groups = mode == 0 ? 1 : b;
      Tape t;
      const Var y = normalize_rows(t, t.input(x), groups, n_groups, t.input(gamma), t.input(beta), 1e-4);
      std::vector<double> want(x.data.size());
      for (int gi = 0; gi < n_groups; ++gi)
        for (int k = 0; k < c; ++k) {
          double m = 0.0, v = 0.0, cnt = 0.0;
          for (std::int64_t i = 0; i < n; ++i)
            if (groups[static_cast<std::size_t>(i)] == gi) m += x.data[static_cast<std::size_t>(i * c + k)], cnt += 1.0;
          m /= cnt;
          for (std::int64_t i = 0; i < n; ++i)
            if (groups[static_cast<std::size_t>(i)] == gi) v += std::pow(x.data[static_cast<std::size_t>(i * c + k)] - m, 2);
          v /= cnt;
          for (std::int64_t i = 0; i < n; ++i)
            if (groups[static_cast<std::size_t>(i)] == gi)
              want[static_cast<std::size_t>(i * c + k)] = (x.data[static_cast<std::size_t>(i * c + k)] - m) /
                                                                std::sqrt(v + 1e-4) * gamma.data[static_cast<std::size_t>(k)] +
                                                            beta.data[static_cast<std::size_t>(k)];
        }
      note(oracle::max_abs_diff(t.value(y).data, want), mode == 0 ? "batch norm" : "instance norm");
    }
    Tape t;
    const auto sm = sparse_softmax(t, {cs, t.input(x)});
    const auto rl = sparse_relu(t, {cs, t.input(x)});
    std::vector<double> want_sm(x.data.size()), want_rl(x.data.size());
    for (std::int64_t i = 0; i < n; ++i) {
      double z = 0.0;
      for (int k = 0; k < c; ++k) z += std::exp(x.data[static_cast<std::size_t>(i * c + k)]);
      for (int k = 0; k < c; ++k) {
        const double v = x.data[static_cast<std::size_t>(i * c + k)];
        want_sm[static_cast<std::size_t>(i * c + k)] = std::exp(v) / z;
        want_rl[static_cast<std::size_t>(i * c + k)] = v > 0.0 ? v : 0.0;
      }
    }
    note(oracle::max_abs_diff(t.value(sm.features).data, want_sm), "softmax");
    note(oracle::max_abs_diff(t.value(rl.features).data, want_rl), "relu");
  }
  {
    // Coarse grid 2 with cell (0,0,0) refined on grid 4.
    const int c = 2;
    std::vector<SparseCoord> coarse, fine;
    for (int z = 0; z < 2; ++z)
      for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) {
          if (x + y + z > 0) coarse.push_back({0, x, y, z});
          fine.push_back({0, x, y, z});
        }
    const auto ccs = std::make_shared<const CoordSet>(1, 2, coarse);
    const auto fcs = std::make_shared<const CoordSet>(1, 4, fine);
    const Tensor cv = oracle::random_tensor({7, c}, rng), fv = oracle::random_tensor({8, c}, rng);
    Tape t;
    const Var d = reconstruct_dense(t, {fcs, t.input(fv)}, {{ccs, t.input(cv)}});
    std::vector<double> want(64 * c);
    for (int z = 0; z < 4; ++z)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
          for (int k = 0; k < c; ++k) {
            double v;
            if (x < 2 && y < 2 && z < 2) {
              v = fv.data[static_cast<std::size_t>((x + 2 * (y + 2 * z)) * c + k)];
            } else {
              const int cell = x / 2 + 2 * (y / 2 + 2 * (z / 2));
              v = cv.data[static_cast<std::size_t>((cell - 1) * c + k)];
            }
            want[static_cast<std::size_t>(((z * 4 + y) * 4 + x) * c + k)] = v;
          }
    note(oracle::max_abs_diff(t.value(d).data, want), "dense reconstruction");
  }
  for (auto [k, stride, pad] : std::vector<std::tuple<int, int, int>>{{3, 1, 1}, {3, 2, 1}, {4, 1, 0}, {1, 1, 0}}) {
    const int m = 2, h = 8, w = 6, cin = 3, cout = 4;
    const Tensor x = oracle::random_tensor({m, h, w, cin}, rng);
    const Tensor wt = oracle::random_tensor({k * k, cin, cout}, rng);
    const Tensor b = oracle::random_tensor({cout}, rng);
    Tape t;
    const Var y = conv2d(t, t.input(x), t.input(wt), t.input(b), {k, stride, pad});
    int ho = 0, wo = 0;
    note(oracle::max_abs_diff(t.value(y).data, oracle::conv2d(x.data, m, h, w, cin, wt.data, k, cout, b.data, stride, pad, ho, wo)),
         "conv2d");
  }
  if (o.pass) o.detail = std::to_string(cases) + " operator cases, worst error " + fmt("%.2e", worst);
  return o;
}

// Composed two-stage generator + critic loss; returns the worst relative
// error and adds the number of compared entries to `accepted`.
double composed_gradient_check(int& accepted, int& tensors) {
  Rng rng(75);
  GeneratorConfig gc;
  gc.stages = 2;
  gc.input_edge = 8;
  gc.widths = {3, 2};
  gc.phases = 2;
  Generator g(gc, 11);
  g.params().at("s1.cls.b").value[2] = 0.3;
  Discriminator d(DiscriminatorConfig::for_generator(gc, {3, 2}, 4), 12);
  const auto lr = oracle::random_blocky({8, 8, 8}, 2, 2, rng);
  const Tensor in = generator_input(gc, lr, rng);
  Tensor lr_pore(Shape{1, 8, 8, 8});
  for (std::int64_t v = 0; v < 512; ++v) lr_pore.data[static_cast<std::size_t>(v)] = lr[v] == 0 ? 1.0 : 0.0;
  auto build = [&](Tape& t) {
    Generator::Options opt;
    opt.training = true;
    opt.grad = true;
    const auto fw = g.forward(t, t.constant(in), opt);
    const Var sr = fw.stages.back().dense;
    Var loss = scale(t, voxel_loss(t, t.constant(lr_pore), sr), 10.0);
    for (const Var& plane : slice_planes(t, sr)) loss = sub(t, loss, mean(t, d.score(t, plane, 2, 0.6, true)));
    return loss;
  };
  {
    Tape t;
    const Var l = build(t);
    g.params().zero_grad();
    d.params().zero_grad();
    t.backward(l);
    t.accumulate_param_grads();
  }
  auto eval = [&] {
    Tape t;
    return t.scalar(build(t));
  };
  double worst = 0.0;
  std::vector<Param*> all = g.params().all();
  for (Param* p : d.params().all()) all.push_back(p);
  for (Param* p : all) {
    if (!p->trainable) continue;
    const auto analytic = p->grad;
    worst = std::max(worst, oracle::fd_check(p->value, analytic, eval, rng, 5, 1e-3, &accepted));
    ++tensors;
  }
  return worst;
}

Outcome gradient_checks() {
  Outcome o;
  Rng rng(6006);
  int ops = 0;
  double worst = 0.0;
  auto check = [&](const std::string& name, std::vector<Tensor> in,
                   const std::function<Var(Tape&, const std::vector<Var>&)>& f) {
    const double e = oracle::check_gradients(in, f, rng, 5);
    worst = std::max(worst, e);
    ++ops;
    o.require(e < 1e-4, name + " relative error " + fmt("%.3g", e));
  };
  auto rt = [&](Shape s) { return oracle::random_tensor(std::move(s), rng); };
  check("mul", {rt({4, 3}), rt({4, 3})}, [](Tape& t, const std::vector<Var>& v) { return mul(t, v[0], v[1]); });
  check("lincomb/square/relu", {rt({4, 3}), rt({4, 3})},
        [](Tape& t, const std::vector<Var>& v) { return lincomb(t, 0.3, square(t, v[0]), -1.7, relu(t, v[1])); });
  check("gather/concat/select", {rt({5, 3})}, [](Tape& t, const std::vector<Var>& v) {
    const Var parts[] = {gather_rows(t, v[0], {4, 1, 1, 0}), v[0]};
    return select_column(t, concat_rows(t, parts), 2);
  });
  check("mean/reshape", {rt({5, 3})},
        [](Tape& t, const std::vector<Var>& v) { return mean(t, square(t, reshape(t, v[0], Shape{15}))); });
  std::vector<SparseCoord> sub;
  for (int b = 0; b < 2; ++b)
    for (int z = 0; z < 3; ++z)
      for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x)
          if ((x + 2 * y + z + b) % 3 != 0) sub.push_back({b, x, y, z});
  const auto cs = std::make_shared<const CoordSet>(2, 3, sub);
  const std::int64_t n = cs->size();
  check("sparse conv", {rt({n, 2}), rt({27, 2, 3}), rt({3})},
        [&](Tape& t, const std::vector<Var>& v) { return sparse_conv3(t, {cs, v[0]}, v[1], v[2], 3).features; });
  check("generative transposed conv", {rt({n, 2}), rt({8, 2, 2}), rt({2})}, [&](Tape& t, const std::vector<Var>& v) {
    return sparse_transpose_conv3_generative(t, {cs, v[0]}, v[1], v[2]).features;
  });
  const auto groups = cs->batch_of_rows();
  check("instance norm", {rt({n, 3}), rt({3}), rt({3})},
        [&](Tape& t, const std::vector<Var>& v) { return normalize_rows(t, v[0], groups, 2, v[1], v[2], 1e-4); });
  check("batch norm", {rt({n, 3}), rt({3}), rt({3})}, [&](Tape& t, const std::vector<Var>& v) {
    return normalize_rows(t, v[0], std::vector<int>(static_cast<std::size_t>(n), 0), 1, v[1], v[2], 1e-4);
  });
  check("fixed norm", {rt({n, 3}), rt({3}), rt({3})}, [&](Tape& t, const std::vector<Var>& v) {
    return normalize_rows_fixed(t, v[0], {0.1, -0.2, 0.3}, {0.5, 1.5, 2.0}, v[1], v[2], 1e-4);
  });
  check("softmax", {rt({n, 4})}, [&](Tape& t, const std::vector<Var>& v) { return sparse_softmax(t, {cs, v[0]}).features; });
  std::vector<bool> mask(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = i % 3 != 1;
  check("prune", {rt({n, 4})}, [&](Tape& t, const std::vector<Var>& v) { return prune(t, {cs, v[0]}, mask).features; });
  {
    std::vector<SparseCoord> coarse, fine;
    for (int z = 0; z < 2; ++z)
      for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) {
          if (x + y + z > 0) coarse.push_back({0, x, y, z});
          fine.push_back({0, x, y, z});
        }
    const auto ccs = std::make_shared<const CoordSet>(1, 2, coarse);
    const auto fcs = std::make_shared<const CoordSet>(1, 4, fine);
    check("dense reconstruction", {rt({8, 2}), rt({7, 2})},
          [&](Tape& t, const std::vector<Var>& v) { return reconstruct_dense(t, {fcs, v[0]}, {{ccs, v[1]}}); });
  }
  check("conv2d", {rt({2, 6, 6, 2}), rt({9, 2, 3}), rt({3})},
        [](Tape& t, const std::vector<Var>& v) { return conv2d(t, v[0], v[1], v[2], {3, 2, 1}); });
  check("avg_pool2", {rt({2, 4, 6, 3})}, [](Tape& t, const std::vector<Var>& v) { return avg_pool2(t, v[0]); });
  check("linear", {rt({3, 4}), rt({4, 2}), rt({2})},
        [](Tape& t, const std::vector<Var>& v) { return linear(t, v[0], v[1], v[2]); });
  check("plane slicing", {rt({2, 3, 3, 3, 2})}, [](Tape& t, const std::vector<Var>& v) {
    const auto p = slice_planes(t, v[0]);
    return add(t, add(t, p[0], scale(t, p[1], 2.0)), scale(t, p[2], -0.5));
  });
  check("voxel loss", {oracle::random_tensor({2, 2, 2, 2}, rng, 0.0, 1.0), oracle::random_tensor({2, 4, 4, 4, 3}, rng, 0.0, 1.0)},
        [](Tape& t, const std::vector<Var>& v) { return reshape(t, voxel_loss(t, v[0], v[1]), Shape{1}); });
  int accepted = 0, tensors = 0;
  const double composed = composed_gradient_check(accepted, tensors);
  worst = std::max(worst, composed);
  o.require(composed < 1e-4, "composed loss relative error " + fmt("%.3g", composed));
  o.require(accepted >= 60, "composed check compared only " + std::to_string(accepted) + " entries");
  if (o.pass)
    o.detail = std::to_string(ops) + " operators and the composed 2-stage loss (" + std::to_string(tensors) + " tensors, " +
               std::to_string(accepted) + " entries), worst relative error " + fmt("%.2e", worst);
  return o;
}

// D(x) = <w, x> per image.
class LinearCritic : public Critic {
 public:
  explicit LinearCritic(Param& w) : w_(w) {}
  Var score(Tape& t, Var images, bool grad, CriticTrace*) const override { return apply(t, images, grad); }
  Var tangent(Tape& t, Var dirs, bool grad, const CriticTrace&) const override { return apply(t, dirs, grad); }

 private:
  Var apply(Tape& t, Var x, bool grad) const {
    const std::int64_t m = t.shape(x)[0], per = t.value(x).numel() / m;
    const Var w = grad ? t.param(w_) : t.constant(Tensor(w_.shape, w_.value));
    const Var rows = reshape(t, x, Shape{m, per});
    std::vector<Var> out;
    for (std::int64_t i = 0; i < m; ++i)
      out.push_back(reshape(t, sum(t, mul(t, reshape(t, gather_rows(t, rows, {i}), Shape{per}), w)), Shape{1, 1}));
    return reshape(t, concat_rows(t, out), Shape{m});
  }
  Param& w_;
};

Outcome penalty_linear_critic() {
  Outcome o;
  Rng rng(7007);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    Param w("w", {5 * 5 * 3});
    w.value = oracle::random_vector(w.value.size(), rng, -0.5, 0.5);
    const LinearCritic critic(w);
    double norm = 0.0;
    for (double v : w.value) norm += v * v;
    norm = std::sqrt(norm);
    Tape t;
    const auto gp = gradient_penalty(t, critic, oracle::random_tensor({4, 5, 5, 3}, rng),
                                     oracle::random_tensor({4, 5, 5, 3}, rng), 10.0, rng);
    worst = std::max(worst, std::fabs(gp.value - 10.0 * (norm - 1.0) * (norm - 1.0)));
  }
  o.require(worst < 1e-6, "worst deviation " + fmt("%.3g", worst));
  if (o.pass) o.detail = "50 trials, worst |GP - lambda(|w| - 1)^2| = " + fmt("%.2e", worst);
  return o;
}

Outcome pg_dataset(std::uint64_t seed) {
  Outcome o;
  Rng rng(seed);
  // 15 x 15 in 5 x 5 patches.
  const LabelVolume img15 = oracle::random_blocky({15, 15, 1}, 3, 5, rng);
  const LabelVolume small = downscale_classify(img15, 5);
  o.require(small.dims() == Dims3{3, 3, 1}, "15x15 with patch 5 gave " + to_string(small.dims()));
  append_bytes(o.output, small);
  // Ladder.
  const PGDataset ladder = build_pg_dataset({oracle::random_blocky({1024, 1024, 1}, 4, 32, rng)}, 5, false);
  std::string sizes;
  for (int s = 1; s <= ladder.stage_count(); ++s) {
    const auto e = ladder.stage(s).images.at(0).dims().nx;
    sizes += (s > 1 ? "/" : "") + std::to_string(e);
    o.require(e == (std::int64_t{64} << (s - 1)) && ladder.stage(s).images[0].dims().ny == e, "ladder stage " + std::to_string(s));
    append_bytes(o.output, ladder.stage(s).images[0]);
  }
  o.require(sizes == "64/128/256/512/1024", "ladder " + sizes);
  // Asymmetric image: an L-shaped marker breaks every symmetry.
  std::vector<std::uint8_t> cells(8 * 8, 0);
  cells[1 + 8 * 1] = 1;
  cells[2 + 8 * 1] = 1;
  cells[3 + 8 * 1] = 1;
  cells[1 + 8 * 2] = 2;
  const auto variants = augment8(LabelVolume({8, 8, 1}, 3, cells));
  std::set<std::vector<std::uint8_t>> distinct;
  for (const auto& v : variants) {
    distinct.emplace(v.data().begin(), v.data().end());
    append_bytes(o.output, v);
  }
  o.require(variants.size() == 8 && distinct.size() == 8, std::to_string(distinct.size()) + " distinct variants");
  // Commutation.
  int commuting = 0;
  for (int i = 0; i < 50; ++i) {
    const std::int64_t n = 4 * (1 + static_cast<std::int64_t>(uniform_index(rng, 4)));
    const int patch = i % 2 == 0 ? 2 : 4;
    const LabelVolume img = oracle::random_blocky({n, n, 1}, 2 + static_cast<int>(uniform_index(rng, 3)),
                                                  1 + static_cast<int>(uniform_index(rng, 4)), rng);
    const auto a = augment8(img);
    const auto b = augment8(downscale_classify(img, patch));
    bool ok = true;
    for (std::size_t k = 0; k < 8; ++k) {
      const LabelVolume d = downscale_classify(a[k], patch);
      ok = ok && d == b[k];
      append_bytes(o.output, d);
    }
    commuting += ok;
  }
  o.require(commuting == 50, std::to_string(commuting) + "/50 images commute");
  if (o.pass) o.detail = "15x15 -> 3x3, ladder " + sizes + ", 8 distinct variants, 50/50 commute";
  return o;
}

Outcome metrics_properties(std::uint64_t seed) {
  Outcome o;
  Rng rng(seed);
  std::ostringstream out;
  out.precision(17);
  int exact_sums = 0;
  for (int i = 0; i < 20; ++i) {
    const LabelVolume v = oracle::random_labels({7 + i % 3, 9, 5 + i % 4}, 2 + i % 4, rng);
    const PhaseCounts c = phase_counts(v);
    std::int64_t total = 0;
    for (auto k : c.counts) total += k;
    double fs = 0.0;
    for (double f : c.fractions()) fs += f;
    o.require(total == c.total, "counts do not cover every voxel");
    exact_sums += fs == 1.0;
    o.require(fs == 1.0, "fraction sum " + fmt("%.17g", fs));
    const auto vf = volume_fraction(v);
    for (int p = 0; p < v.n_classes(); ++p) {
      const auto s2 = two_point_correlation(v, p, 2);
      o.require(s2[0] == vf[static_cast<std::size_t>(p)], "S2(0) differs from the volume fraction");
      out << s2[0] << ',' << s2[1] << ',' << s2[2] << ';';
    }
    out << '\n';
  }
  std::vector<std::uint8_t> bern(64 * 64 * 64);
  for (auto& b : bern) b = uniform01(rng) < 0.3 ? 1 : 0;
  const auto s2 = two_point_correlation(LabelVolume({64, 64, 64}, 2, bern), 1, 16);
  o.require(std::fabs(s2[16] - 0.09) <= 0.01, "Bernoulli S2(16) = " + fmt("%.4f", s2[16]));
  out << s2[16] << '\n';
  int matched = 0;
  for (int i = 0; i < 5; ++i) {
    const LabelVolume v = oracle::random_labels({8, 8, 8}, 2 + i % 3, rng);
    std::int64_t total = 0;
    const auto want = oracle::enumerate_faces(v, total);
    const PairFractions got = relative_surface_area(v);
    bool ok = got.faces == total;
    for (int a = 0; a < v.n_classes(); ++a)
      for (int b = a; b < v.n_classes(); ++b) {
        const auto it = want.find({a, b});
        const std::int64_t w = it == want.end() ? 0 : it->second;
        ok = ok && got.count(a, b) == w &&
             got.fraction(a, b) == static_cast<double>(w) / static_cast<double>(total);
        out << got.count(a, b) << ' ';
      }
    matched += ok;
    out << '\n';
  }
  o.require(matched == 5, std::to_string(matched) + "/5 surface-area volumes match enumeration");
  o.output = out.str();
  if (o.pass)
    o.detail = "fraction sums exactly 1 in " + std::to_string(exact_sums) + "/20, S2(0) exact, Bernoulli S2(16) = " +
               fmt("%.4f", s2[16]) + ", 5/5 surface-area volumes exact";
  return o;
}

Outcome fade_endpoints() {
  Outcome o;
  DiscriminatorConfig c;
  c.stages = 3;
  c.in_channels = 3;
  c.entry_edge = 8;
  c.widths = {6, 4, 3};
  c.tail_width = 5;
  Discriminator d(c, 21);
  Rng rng(1010);
  auto scores = [&](const Tensor& x, int s, double a) {
    Tape t;
    return t.value(d.score(t, t.constant(x), s, a, false)).data;
  };
  double worst = 0.0;
  for (int s = 2; s <= 3; ++s) {
    const std::int64_t e = 8 << (s - 1);
    const Tensor x = oracle::random_tensor({4, e, e, 3}, rng);
    Tape t;
    const Tensor pooled = t.value(avg_pool2(t, t.constant(x)));
    worst = std::max(worst, oracle::max_abs_diff(scores(x, s, 0.0), scores(pooled, s - 1, 1.0)));
  }
  o.require(worst < 1e-9, "alpha = 0 deviation " + fmt("%.3g", worst));
  const Tensor x = oracle::random_tensor({3, 16, 16, 3}, rng);
  const auto clean = scores(x, 2, 1.0);
  for (const char* name : {"from1.w", "from1.b"})
    for (auto& v : d.params().at(name).value) v = std::numeric_limits<double>::quiet_NaN();
  const auto poisoned = scores(x, 2, 1.0);
  o.require(poisoned == clean, "alpha = 1 score depends on the pooled path");
  o.require(scores(x, 2, 0.5) != clean, "poisoned pooled path had no effect at alpha = 0.5");
  if (o.pass)
    o.detail = "alpha = 0 matches the pooled previous stage to " + fmt("%.1e", worst) +
               "; alpha = 1 scores unchanged with NaN in the pooled path";
  return o;
}

Outcome toy_end_to_end(std::uint64_t seed) {
  Outcome o;
  GeneratorConfig g;
  g.stages = 2;
  g.input_edge = 16;
  g.widths = {32, 16};
  g.phases = 2;
  const DiscriminatorConfig d = DiscriminatorConfig::desk(g);
  TrainConfig tc;
  tc.batch_size = 1;
  tc.iterations_per_epoch = 10;
  tc.epochs_per_stage = 10;
  tc.fade_epochs = 5;
  tc.learning_rates = {1e-3, 1e-3};
  tc.check_probability = true;
  tc.seed = seed;

  Rng rng(seed);
  const LabelVolume hr = oracle::random_spheres({64, 64, 64}, 2, 0.25, rng);
  const LabelVolume lr = downsample_nearest(hr, 2);
  std::vector<LabelVolume> slices;
  for (std::int64_t z = 0; z < 64; z += 8) {
    std::vector<std::uint8_t> cells;
    for (std::int64_t y = 0; y < 64; ++y)
      for (std::int64_t x = 0; x < 64; ++x) cells.push_back(hr.at(x, y, z));
    slices.emplace_back(Dims3{64, 64, 1}, 2, std::move(cells));
  }
  const PGDataset ds = build_pg_dataset(slices, 2);

  Trainer tr(g, d, tc);
  std::vector<StepRecord> history;
  const double t = seconds([&] {
    auto h1 = tr.train_stage(lr, ds, 1);
    std::map<std::string, std::vector<double>> frozen;
    for (const Param* p : tr.generator().params().all())
      if (p->stage == 1) frozen[p->name] = p->value;
    auto h2 = tr.train_stage(lr, ds, 2);
    int changed = 0;
    for (const Param* p : tr.generator().params().all())
      if (p->stage == 1) changed += p->value != frozen.at(p->name);
    o.require(changed == 0, std::to_string(changed) + " frozen stage-1 tensors changed");
    history = std::move(h1);
    history.insert(history.end(), h2.begin(), h2.end());
  });
  bool finite = true, probs = true;
  for (const auto& r : history) {
    finite = finite && std::isfinite(r.l_d) && std::isfinite(r.l_g) && std::isfinite(r.l_gp) && std::isfinite(r.l_vw);
    probs = probs && r.probability_ok;
  }
  o.require(history.size() == 200, std::to_string(history.size()) + " iterations");
  o.require(finite, "non-finite loss");
  o.require(probs, "a reconstruction was not a probability field");

  const LabelVolume out = superresolve_chunked(tr.generator(), lr, seed, 1);
  const double pore = volume_fraction(out)[0];
  o.require(out.dims() == Dims3{64, 64, 64}, "output " + to_string(out.dims()));
  o.require(std::fabs(pore - 0.25) <= 0.15, "generated pore fraction " + fmt("%.3f", pore));

  std::ostringstream csv;
  write_loss_history_csv(csv, history);
  o.output = csv.str();
  append_bytes(o.output, out);
  if (o.pass)
    o.detail = "200 iterations in " + fmt("%.0f s", t) + ", losses finite, stage 1 frozen, probability fields valid, pore " +
               fmt("%.3f", pore) + " (target 0.25)";
  return o;
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int id, const char* name, const Outcome& o) {
    std::printf("criterion %2d %-28s %s  %s\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  };
  auto guarded = [](const std::function<Outcome()>& f) {
    try {
      return f();
    } catch (const std::exception& e) {
      Outcome o;
      o.require(false, std::string("exception: ") + e.what());
      return o;
    }
  };

  report(1, "parameter counts", guarded(parameter_counts));
  report(2, "memory ledger", guarded(memory_ledger));
  const Outcome c3 = guarded([] { return octree_conservation(3003); });
  report(3, "octree conservation", c3);
  report(4, "round trips", guarded(round_trips));
  report(5, "operator oracles", guarded(operator_oracles));
  report(6, "gradient checks", guarded(gradient_checks));
  report(7, "penalty, linear critic", guarded(penalty_linear_critic));
  const Outcome c8 = guarded([] { return pg_dataset(8008); });
  report(8, "progressive dataset", c8);
  const Outcome c9 = guarded([] { return metrics_properties(9009); });
  report(9, "metrics properties", c9);
  report(10, "fade endpoints", guarded(fade_endpoints));
  const Outcome c11 = guarded([] { return toy_end_to_end(1111); });
  report(11, "toy end-to-end", c11);

  Outcome c12;
  const std::pair<const Outcome*, std::function<Outcome()>> reruns[] = {
      {&c3, [] { return octree_conservation(3003); }},
      {&c8, [] { return pg_dataset(8008); }},
      {&c9, [] { return metrics_properties(9009); }},
      {&c11, [] { return toy_end_to_end(1111); }},
  };
  const int ids[] = {3, 8, 9, 11};
  std::string hashes;
  for (std::size_t i = 0; i < 4; ++i) {
    const Outcome again = guarded(reruns[i].second);
    const bool same = !again.output.empty() && again.output == reruns[i].first->output;
    c12.require(same, "criterion " + std::to_string(ids[i]) + " output differs on rerun");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%d:%016llx", i ? " " : "", ids[i], static_cast<unsigned long long>(fnv1a(again.output)));
    hashes += buf;
  }
  if (c12.pass) c12.detail = "reruns byte-identical (" + hashes + ")";
  report(12, "determinism", c12);

  std::printf("%d of 12 criteria passed\n", 12 - failed);
  return failed == 0 ? 0 : 1;
}
