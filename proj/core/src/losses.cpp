// SPDX-License-Identifier: Apache-2.0
#include "octsr/losses.hpp"

#include <algorithm>
#include <cmath>

#include "octsr/error.hpp"

namespace octsr {

PenaltyResult gradient_penalty(Tape& t, const Critic& critic, const Tensor& real, const Tensor& fake, double lambda,
                               Rng& rng) {
  if (real.shape.size() != 4 || fake.shape.size() != 4 ||
      !std::equal(real.shape.begin() + 1, real.shape.end(), fake.shape.begin() + 1))
    throw ShapeError("gradient_penalty: real " + shape_string(real.shape) + " and fake " + shape_string(fake.shape) +
                     " images differ");
  const std::int64_t m = fake.shape[0], n_real = real.shape[0];
  if (m == 0 || n_real == 0) throw ShapeError("gradient_penalty: empty batch");
  const std::int64_t per = fake.numel() / m;

  Tensor mixed(fake.shape);
  for (std::int64_t i = 0; i < m; ++i) {
    const double eps = uniform01(rng);
    const double* r = real.data.data() + (i % n_real) * per;
    const double* f = fake.data.data() + i * per;
    double* o = mixed.data.data() + i * per;
    for (std::int64_t k = 0; k < per; ++k) o[k] = eps * r[k] + (1.0 - eps) * f[k];
  }

  // Input gradient on a scratch tape; the critic's parameters are constants there.
  Tape scratch;
  Var xhat = scratch.input(std::move(mixed));
  CriticTrace trace;
  Var scores = critic.score(scratch, xhat, false, &trace);
  scratch.backward(sum(scratch, scores));
  const std::vector<double> g = scratch.grad_or_zero(xhat);

  PenaltyResult r;
  std::vector<double> dirs(g.size(), 0.0);
  double total = 0.0;
  for (std::int64_t i = 0; i < m; ++i) {
    const double* gi = g.data() + i * per;
    double sq = 0.0;
    for (std::int64_t k = 0; k < per; ++k) sq += gi[k] * gi[k];
    const double norm = std::sqrt(sq);
    r.grad_norms.push_back(norm);
    total += (norm - 1.0) * (norm - 1.0);
    if (norm > 0.0) {
      // d/dg of lambda/M (|g| - 1)^2, held fixed while differentiating g.
      const double coef = lambda / static_cast<double>(m) * 2.0 * (norm - 1.0) / norm;
      for (std::int64_t k = 0; k < per; ++k) dirs[static_cast<std::size_t>(i * per + k)] = coef * gi[k];
    }
  }
  r.value = lambda * total / static_cast<double>(m);
  Var v = t.constant(Tensor(fake.shape, std::move(dirs)));
  Var surrogate = sum(t, critic.tangent(t, v, true, trace));
  r.loss = with_value(t, surrogate, r.value);
  return r;
}

Var voxel_loss(Tape& t, Var lr_pore, Var sr, int pore_channel) {
  const auto& ls = t.shape(lr_pore);
  const auto& ss = t.shape(sr);
  if (ls.size() != 4 || ss.size() != 5 || ls[0] != ss[0] || ls[1] == 0 || ss[1] % ls[1] != 0 || ss[1] != ss[2] ||
      ss[2] != ss[3] || ls[1] != ls[2] || ls[2] != ls[3])
    throw ShapeError("voxel_loss: low-resolution " + shape_string(ls) + " does not match super-resolved " +
                     shape_string(ss));
  if (pore_channel < 0 || pore_channel >= ss[4]) throw ShapeError("voxel_loss: pore channel out of range");
  const std::int64_t b = ls[0], e = ls[1], g = ss[1], c = ss[4], f = g / e;
  std::vector<std::int64_t> index;
  index.reserve(static_cast<std::size_t>(b * e * e * e));
  for (std::int64_t bi = 0; bi < b; ++bi)
    for (std::int64_t z = 0; z < e; ++z)
      for (std::int64_t y = 0; y < e; ++y)
        for (std::int64_t x = 0; x < e; ++x) index.push_back(((bi * g + z * f) * g + y * f) * g + x * f);
  Var rows = reshape(t, sr, Shape{b * g * g * g, c});
  Var sampled = select_column(t, gather_rows(t, rows, std::move(index), Shape{b * e * e * e, c}), pore_channel);
  return mean(t, square(t, sub(t, sampled, reshape(t, lr_pore, Shape{b * e * e * e}))));
}

double voxel_loss(const FeatureField& lr_pore, const FeatureField& sr, int pore_channel) {
  if (lr_pore.channels() != 1) throw ShapeError("voxel_loss: low-resolution field must hold the pore channel only");
  const Dims3& ld = lr_pore.dims();
  const Dims3& sd = sr.dims();
  if (!ld.is_cube() || !sd.is_cube())
    throw ShapeError("voxel_loss: fields must be cubes, got " + to_string(ld) + " and " + to_string(sd));
  Tape t;
  Var l = t.constant(Tensor(Shape{1, ld.nx, ld.ny, ld.nz}, std::vector<double>(lr_pore.data().begin(), lr_pore.data().end())));
  Var s = t.constant(Tensor(Shape{1, sd.nx, sd.ny, sd.nz, sr.channels()}, std::vector<double>(sr.data().begin(), sr.data().end())));
  return t.scalar(voxel_loss(t, l, s, pore_channel));
}

}  // namespace octsr
