// SPDX-License-Identifier: Apache-2.0
#include "octsr/discriminator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "octsr/dense.hpp"
#include "octsr/error.hpp"

namespace octsr {

int DiscriminatorConfig::tail_convs() const { return std::bit_width(static_cast<unsigned>(entry_edge)) - 1 - 3; }

void DiscriminatorConfig::validate() const {
  std::vector<std::string> bad;
  if (stages < 1) bad.push_back("stages must be >= 1");
  if (in_channels < 1) bad.push_back("in_channels must be >= 1");
  if (entry_edge < 8 || !std::has_single_bit(static_cast<unsigned>(entry_edge)))
    bad.push_back("entry_edge must be a power of two >= 8");
  if (static_cast<int>(widths.size()) != stages)
    bad.push_back("widths has " + std::to_string(widths.size()) + " entries for " + std::to_string(stages) + " stages");
  for (std::size_t i = 0; i < widths.size(); ++i)
    if (widths[i] < 1) bad.push_back("widths[" + std::to_string(i) + "] must be positive");
  if (tail_width < 1) bad.push_back("tail_width must be positive");
  if (bad.empty()) return;
  std::string msg = "invalid discriminator config:";
  for (const auto& b : bad) msg += "\n  " + b;
  throw ShapeError(msg);
}

DiscriminatorConfig DiscriminatorConfig::reference() { return DiscriminatorConfig{}; }

DiscriminatorConfig DiscriminatorConfig::for_generator(const GeneratorConfig& g, std::vector<int> widths,
                                                       int tail_width) {
  DiscriminatorConfig d;
  d.stages = g.stages;
  d.in_channels = g.class_channels();
  d.entry_edge = g.input_edge;
  d.widths = std::move(widths);
  d.tail_width = tail_width;
  return d;
}

DiscriminatorConfig DiscriminatorConfig::desk(const GeneratorConfig& g) {
  std::vector<int> widths;
  for (int s = 1; s <= g.stages; ++s) widths.push_back(std::max(16, 32 >> (s - 1)));
  return for_generator(g, std::move(widths), 32);
}

double FadeState::alpha() const {
  if (fade_epochs <= 0) return 1.0;
  return std::min(1.0, static_cast<double>(epoch) / static_cast<double>(fade_epochs));
}

// ---------------------------------------------------------------------------

namespace {

std::string block(int s) { return "l" + std::to_string(s); }
std::string adapter(int s) { return "from" + std::to_string(s); }
std::string tail(int i) { return "tail" + std::to_string(i); }

}  // namespace

Discriminator::Discriminator(DiscriminatorConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int x = cfg_.stages;
  auto width = [&](int s) { return s == x + 1 ? cfg_.in_channels : cfg_.widths[static_cast<std::size_t>(s - 1)]; };
  for (int s = 1; s <= x; ++s) {
    params_.create(block(s) + ".w", {9, width(s + 1), width(s)}, s);
    params_.create(block(s) + ".b", {width(s)}, s);
    if (s < x) {
      params_.create(adapter(s) + ".w", {1, cfg_.in_channels, width(s + 1)}, s);
      params_.create(adapter(s) + ".b", {width(s + 1)}, s);
    }
  }
  int prev = width(1);
  for (int i = 0; i < cfg_.tail_convs(); ++i) {
    params_.create(tail(i) + ".w", {9, prev, cfg_.tail_width}, 0);
    params_.create(tail(i) + ".b", {cfg_.tail_width}, 0);
    prev = cfg_.tail_width;
  }
  params_.create("final.w", {16, prev, cfg_.tail_width}, 0);
  params_.create("final.b", {cfg_.tail_width}, 0);
  params_.create("fc.w", {cfg_.tail_width, 1}, 0);
  params_.create("fc.b", {1}, 0);
  init_weights(init_seed);
}

void Discriminator::init_weights(std::uint64_t seed) {
  Rng rng(seed);
  for (Param* p : params_.all()) {
    const std::string layer = p->name.substr(0, p->name.find('.'));
    const Shape& ws = params_.at(layer + ".w").shape;
    const double fan = ws.size() == 3 ? static_cast<double>(ws[0] * ws[1]) : static_cast<double>(ws[0]);
    const double bound = 1.0 / std::sqrt(fan);
    for (auto& v : p->value) v = to_float_precision((2.0 * uniform01(rng) - 1.0) * bound);
  }
}

void Discriminator::zero_weights() {
  for (Param* p : params_.all()) std::fill(p->value.begin(), p->value.end(), 0.0);
}

std::vector<LayerCount> Discriminator::layer_counts() const {
  std::vector<LayerCount> out;
  auto add = [&](int stage, const std::string& name, const std::string& kind) {
    out.push_back({stage, name, kind, params_.at(name + ".w").numel() + params_.at(name + ".b").numel()});
  };
  for (int s = cfg_.stages; s >= 1; --s) add(s, block(s), "conv2d_k3_s2");
  for (int i = 0; i < cfg_.tail_convs(); ++i) add(0, tail(i), "conv2d_k3_s2");
  add(0, "final", "conv2d_k4");
  add(0, "fc", "linear");
  return out;
}

std::int64_t Discriminator::count_params() const {
  std::int64_t n = 0;
  for (const auto& l : layer_counts()) n += l.params;
  return n;
}

Var Discriminator::score(Tape& t, Var images, int stage, double alpha, bool grad, CriticTrace* trace) const {
  if (trace) trace->masks.clear();
  return run(t, images, stage, alpha, grad, trace, nullptr);
}

Var Discriminator::tangent(Tape& t, Var dirs, int stage, double alpha, bool grad, const CriticTrace& trace) const {
  return run(t, dirs, stage, alpha, grad, nullptr, &trace);
}

Var Discriminator::run(Tape& t, Var x, int stage, double alpha, bool grad, CriticTrace* record,
                       const CriticTrace* replay) const {
  if (stage < 1 || stage > cfg_.stages) throw ShapeError("discriminator stage " + std::to_string(stage) + " out of range");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ShapeError("fade alpha must lie in [0, 1]");
  const auto& xs = t.shape(x);
  const std::int64_t e = cfg_.stage_edge(stage);
  if (xs.size() != 4 || xs[1] != e || xs[2] != e || xs[3] != cfg_.in_channels)
    throw ShapeError("stage " + std::to_string(stage) + " critic expects [M, " + std::to_string(e) + ", " +
                     std::to_string(e) + ", " + std::to_string(cfg_.in_channels) + "] images, got " + shape_string(xs));
  const std::int64_t m = xs[0];

  std::size_t mask_index = 0;
  auto weight = [&](const std::string& name) -> Var {
    const Param& p = params_.at(name);
    if (grad) return t.param(const_cast<Param&>(p));
    return t.constant(Tensor(p.shape, p.value));
  };
  // The linearization drops every bias.
  auto bias = [&](const std::string& name) -> Var { return replay ? Var{} : weight(name); };
  auto activate = [&](Var a) -> Var {
    if (replay) {
      if (mask_index >= replay->masks.size()) throw Error("critic trace does not match this evaluation");
      return mul_const(t, a, replay->masks[mask_index++]);
    }
    if (record) {
      const auto& v = t.value(a).data;
      std::vector<double> mask(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) mask[i] = v[i] > 0.0 ? 1.0 : 0.0;
      record->masks.push_back(std::move(mask));
    }
    return relu(t, a);
  };
  auto adapt = [&](int s, Var in) -> Var {
    if (s == cfg_.stages) return in;
    return conv2d(t, in, weight(adapter(s) + ".w"), bias(adapter(s) + ".b"), Conv2dSpec{1, 1, 0});
  };
  auto down = [&](int s, Var in) -> Var {
    return activate(conv2d(t, in, weight(block(s) + ".w"), bias(block(s) + ".b"), Conv2dSpec{3, 2, 1}));
  };

  Var h = down(stage, adapt(stage, x));
  if (stage > 1 && alpha < 1.0) h = lincomb(t, alpha, h, 1.0 - alpha, adapt(stage - 1, avg_pool2(t, x)));
  for (int s = stage - 1; s >= 1; --s) h = down(s, h);
  for (int i = 0; i < cfg_.tail_convs(); ++i)
    h = activate(conv2d(t, h, weight(tail(i) + ".w"), bias(tail(i) + ".b"), Conv2dSpec{3, 2, 1}));
  h = activate(conv2d(t, h, weight("final.w"), bias("final.b"), Conv2dSpec{4, 1, 0}));
  h = reshape(t, h, Shape{m, cfg_.tail_width});
  h = linear(t, h, weight("fc.w"), bias("fc.b"));
  return reshape(t, h, Shape{m});
}

}  // namespace octsr
