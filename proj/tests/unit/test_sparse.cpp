// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "octsr/error.hpp"
#include "octsr/sparse.hpp"
#include "oracles.hpp"

using namespace octsr;

namespace {

SparseVar full_field(Tape& t, int b, int g, Var features) { return {CoordSet::full_grid(b, g), features}; }

// A random subset of a grid, always nonempty.
CoordSetPtr random_subset(int b, int g, double keep, Rng& rng) {
  std::vector<SparseCoord> c;
  for (int n = 0; n < b; ++n)
    for (int z = 0; z < g; ++z)
      for (int y = 0; y < g; ++y)
        for (int x = 0; x < g; ++x)
          if (uniform01(rng) < keep || c.empty()) c.push_back({n, x, y, z});
  return std::make_shared<const CoordSet>(b, g, std::move(c));
}

}  // namespace

TEST_CASE("coordinate sets validate order and support lookups") {
  const auto full = CoordSet::full_grid(2, 3);
  CHECK(full->size() == 54);
  CHECK(full->find(1, 2, 0, 1) == 27 + 2 + 3 * (0 + 3 * 1));
  CHECK(full->find(0, 3, 0, 0) == -1);
  CHECK_THROWS_AS(CoordSet(1, 4, {{0, 1, 0, 0}, {0, 0, 0, 0}}), ShapeError);
  CHECK_THROWS_AS(CoordSet(1, 4, {{0, 0, 0, 0}, {0, 0, 0, 0}}), ShapeError);
  CHECK_THROWS_AS(CoordSet(1, 4, {{0, 4, 0, 0}}), ShapeError);
  const auto rows = full->batch_of_rows();
  CHECK(rows.front() == 0);
  CHECK(rows.back() == 1);
}

TEST_CASE("sparse convolution on a full grid matches the dense oracle") {
  Rng rng(51);
  for (int g = 2; g <= 6; g += 2)
    for (int k : {1, 3, 5}) {
      const int b = 2, cin = 3, cout = 2;
      const Tensor x = oracle::random_tensor({b * g * g * g, cin}, rng);
      const Tensor w = oracle::random_tensor({k * k * k, cin, cout}, rng);
      const Tensor bias = oracle::random_tensor({cout}, rng);
      Tape t;
      const auto y = sparse_conv3(t, full_field(t, b, g, t.input(x)), t.input(w), t.input(bias), k);
      const auto want = oracle::conv3d_same(x.data, b, g, cin, w.data, k, cout, bias.data);
      CHECK(oracle::max_abs_diff(t.value(y.features).data, want) < 1e-9);
    }
}

TEST_CASE("sparse convolution on a subset equals the dense oracle on a zero-filled grid") {
  Rng rng(52);
  const int b = 1, g = 5, cin = 2, cout = 3, k = 3;
  const auto cs = random_subset(b, g, 0.4, rng);
  const Tensor x = oracle::random_tensor({cs->size(), cin}, rng);
  const Tensor w = oracle::random_tensor({27, cin, cout}, rng);
  std::vector<double> dense(static_cast<std::size_t>(g * g * g * cin), 0.0);
  for (std::int64_t i = 0; i < cs->size(); ++i) {
    const auto& c = (*cs)[i];
    for (int ci = 0; ci < cin; ++ci)
      dense[static_cast<std::size_t>(((c[3] * g + c[2]) * g + c[1]) * cin + ci)] = x.data[static_cast<std::size_t>(i * cin + ci)];
  }
  const auto want = oracle::conv3d_same(dense, b, g, cin, w.data, k, cout, {});
  Tape t;
  const auto y = sparse_conv3(t, {cs, t.input(x)}, t.input(w), Var{}, k);
  CHECK(y.coords == cs);
  double err = 0.0;
  for (std::int64_t i = 0; i < cs->size(); ++i) {
    const auto& c = (*cs)[i];
    for (int co = 0; co < cout; ++co)
      err = std::max(err, std::fabs(t.value(y.features).data[static_cast<std::size_t>(i * cout + co)] -
                                    want[static_cast<std::size_t>(((c[3] * g + c[2]) * g + c[1]) * cout + co)]));
  }
  CHECK(err < 1e-9);
}

TEST_CASE("generative transposed convolution matches the dense oracle") {
  Rng rng(53);
  for (int g = 1; g <= 3; ++g) {
    const int b = 2, cin = 3, cout = 2;
    const Tensor x = oracle::random_tensor({b * g * g * g, cin}, rng);
    const Tensor w = oracle::random_tensor({8, cin, cout}, rng);
    const Tensor bias = oracle::random_tensor({cout}, rng);
    Tape t;
    const auto y = sparse_transpose_conv3_generative(t, full_field(t, b, g, t.input(x)), t.input(w), t.input(bias));
    CHECK(y.coords->grid_edge() == 2 * g);
    CHECK(y.coords->size() == b * 8 * g * g * g);
    const auto want = oracle::conv_transpose3d_k2(x.data, b, g, cin, w.data, cout, bias.data);
    CHECK(oracle::max_abs_diff(t.value(y.features).data, want) < 1e-9);
  }
}

TEST_CASE("row normalization matches direct statistics") {
  Rng rng(54);
  const int n = 10, c = 3;
  const Tensor x = oracle::random_tensor({n, c}, rng);
  const Tensor gamma = oracle::random_tensor({c}, rng);
  const Tensor beta = oracle::random_tensor({c}, rng);
  std::vector<int> groups(n);
  for (int i = 0; i < n; ++i) groups[static_cast<std::size_t>(i)] = i < 4 ? 0 : 1;
  Tape t;
  NormStats stats;
  Var y = normalize_rows(t, t.input(x), groups, 2, t.input(gamma), t.input(beta), 1e-4, &stats);
  for (int gi = 0; gi < 2; ++gi)
    for (int k = 0; k < c; ++k) {
      double m = 0.0, v = 0.0;
      int cnt = 0;
      for (int i = 0; i < n; ++i)
        if (groups[static_cast<std::size_t>(i)] == gi) {
          m += x.data[static_cast<std::size_t>(i * c + k)];
          ++cnt;
        }
      m /= cnt;
      for (int i = 0; i < n; ++i)
        if (groups[static_cast<std::size_t>(i)] == gi) v += std::pow(x.data[static_cast<std::size_t>(i * c + k)] - m, 2);
      v /= cnt;
      CHECK(stats.mean[static_cast<std::size_t>(gi * c + k)] == doctest::Approx(m));
      CHECK(stats.variance[static_cast<std::size_t>(gi * c + k)] == doctest::Approx(v));
      for (int i = 0; i < n; ++i)
        if (groups[static_cast<std::size_t>(i)] == gi) {
          const double want = (x.data[static_cast<std::size_t>(i * c + k)] - m) / std::sqrt(v + 1e-4) *
                                  gamma.data[static_cast<std::size_t>(k)] + beta.data[static_cast<std::size_t>(k)];
          CHECK(std::fabs(t.value(y).data[static_cast<std::size_t>(i * c + k)] - want) < 1e-12);
        }
    }
  Var f = normalize_rows_fixed(t, t.input(x), {0.1, 0.2, 0.3}, {1.0, 2.0, 0.5}, t.input(gamma), t.input(beta), 1e-4);
  CHECK(t.value(f).data[4] ==
        doctest::Approx((x.data[4] - 0.2) / std::sqrt(2.0001) * gamma.data[1] + beta.data[1]));
  CHECK_THROWS_AS(normalize_rows(t, t.input(Tensor({0, 3})), {}, 1, t.input(gamma), t.input(beta), 1e-4), ShapeError);
}

TEST_CASE("softmax rows are probability vectors") {
  Rng rng(55);
  Tape t;
  Var y = softmax_rows(t, t.input(oracle::random_tensor({6, 5}, rng, -30.0, 30.0)));
  for (int i = 0; i < 6; ++i) {
    double s = 0.0;
    for (int k = 0; k < 5; ++k) s += t.value(y).data[static_cast<std::size_t>(i * 5 + k)];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("prune keeps masked rows in order") {
  Tape t;
  auto cs = CoordSet::full_grid(1, 2);
  Tensor x({8, 1});
  for (int i = 0; i < 8; ++i) x.data[static_cast<std::size_t>(i)] = i;
  const auto p = prune(t, {cs, t.input(x)}, {true, false, false, true, false, false, false, true});
  CHECK(p.coords->size() == 3);
  CHECK(t.value(p.features).data == std::vector<double>{0, 3, 7});
  CHECK((*p.coords)[1] == SparseCoord{0, 1, 1, 0});
  CHECK_THROWS_AS(prune(t, {cs, t.input(x)}, {true}), ShapeError);
}

TEST_CASE("dense reconstruction replicates coarse rows and detects tiling errors") {
  Tape t;
  // Grid 2 at the coarse level: cell (0,0,0) mixed, the other seven memorized.
  std::vector<SparseCoord> coarse;
  for (int z = 0; z < 2; ++z)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x)
        if (x + y + z > 0) coarse.push_back({0, x, y, z});
  auto ccs = std::make_shared<const CoordSet>(1, 2, coarse);
  Tensor cv({7, 1});
  for (int i = 0; i < 7; ++i) cv.data[static_cast<std::size_t>(i)] = 10 + i;
  std::vector<SparseCoord> fine;
  for (int z = 0; z < 2; ++z)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) fine.push_back({0, x, y, z});
  auto fcs = std::make_shared<const CoordSet>(1, 4, fine);
  Tensor fv({8, 1});
  for (int i = 0; i < 8; ++i) fv.data[static_cast<std::size_t>(i)] = i;
  Var d = reconstruct_dense(t, {fcs, t.input(fv)}, {{ccs, t.input(cv)}});
  CHECK(t.shape(d) == Shape{1, 4, 4, 4, 1});
  auto at = [&](int x, int y, int z) { return t.value(d).data[static_cast<std::size_t>((z * 4 + y) * 4 + x)]; };
  CHECK(at(1, 1, 0) == 3);
  CHECK(at(3, 0, 0) == 10);
  CHECK(at(3, 3, 3) == 16);
  CHECK(at(0, 2, 1) == 11);
  CHECK_THROWS_AS(reconstruct_dense(t, {fcs, t.input(fv)}, {}), ShapeError);
  CHECK_THROWS_AS(reconstruct_dense(t, {fcs, t.input(fv)}, {{ccs, t.input(cv)}, {ccs, t.input(cv)}}), ShapeError);
}

TEST_CASE("sparse operators pass finite-difference checks") {
  Rng rng(56);
  const auto cs = random_subset(2, 3, 0.6, rng);
  const std::int64_t n = cs->size();
  std::vector<Tensor> conv{oracle::random_tensor({n, 2}, rng), oracle::random_tensor({27, 2, 3}, rng),
                           oracle::random_tensor({3}, rng)};
  CHECK(oracle::check_gradients(conv, [&](Tape& t, const std::vector<Var>& v) {
          return sparse_conv3(t, {cs, v[0]}, v[1], v[2], 3).features;
        }, rng) < 1e-4);
  std::vector<Tensor> up{oracle::random_tensor({n, 2}, rng), oracle::random_tensor({8, 2, 2}, rng),
                         oracle::random_tensor({2}, rng)};
  CHECK(oracle::check_gradients(up, [&](Tape& t, const std::vector<Var>& v) {
          return sparse_transpose_conv3_generative(t, {cs, v[0]}, v[1], v[2]).features;
        }, rng) < 1e-4);
  const auto groups = cs->batch_of_rows();
  std::vector<Tensor> norm{oracle::random_tensor({n, 3}, rng), oracle::random_tensor({3}, rng),
                           oracle::random_tensor({3}, rng)};
  CHECK(oracle::check_gradients(norm, [&](Tape& t, const std::vector<Var>& v) {
          return normalize_rows(t, v[0], groups, 2, v[1], v[2], 1e-4);
        }, rng) < 1e-4);
  CHECK(oracle::check_gradients(norm, [&](Tape& t, const std::vector<Var>& v) {
          return normalize_rows(t, v[0], std::vector<int>(static_cast<std::size_t>(n), 0), 1, v[1], v[2], 1e-4);
        }, rng) < 1e-4);
  CHECK(oracle::check_gradients(norm, [&](Tape& t, const std::vector<Var>& v) {
          return normalize_rows_fixed(t, v[0], {0.1, -0.2, 0.3}, {0.5, 1.5, 2.0}, v[1], v[2], 1e-4);
        }, rng) < 1e-4);
  std::vector<Tensor> sm{oracle::random_tensor({n, 4}, rng, -2.0, 2.0)};
  CHECK(oracle::check_gradients(sm, [&](Tape& t, const std::vector<Var>& v) {
          return sparse_softmax(t, {cs, v[0]}).features;
        }, rng) < 1e-4);
  std::vector<bool> mask(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = i % 3 != 1;
  CHECK(oracle::check_gradients(sm, [&](Tape& t, const std::vector<Var>& v) {
          return prune(t, {cs, v[0]}, mask).features;
        }, rng) < 1e-4);
}
