// SPDX-License-Identifier: Apache-2.0
#include "octsr/trainer.hpp"

#include <cmath>
#include <ostream>

#include <json.hpp>

#include "octsr/config_io.hpp"
#include "octsr/dense.hpp"
#include "octsr/error.hpp"

namespace octsr {

void TrainConfig::validate() const {
  std::vector<std::string> bad;
  if (epochs_per_stage < 0) bad.push_back("epochs_per_stage must be >= 0");
  if (iterations_per_epoch < 1) bad.push_back("iterations_per_epoch must be >= 1");
  if (batch_size < 1) bad.push_back("batch_size must be >= 1");
  if (learning_rates.empty()) bad.push_back("learning_rates must not be empty");
  for (std::size_t i = 0; i < learning_rates.size(); ++i)
    if (!(learning_rates[i] > 0.0)) bad.push_back("learning_rates[" + std::to_string(i) + "] must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) bad.push_back("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) bad.push_back("beta2 must be in [0, 1)");
  if (!(adam_eps > 0.0)) bad.push_back("adam_eps must be positive");
  if (!(weight_decay >= 0.0)) bad.push_back("weight_decay must be >= 0");
  if (!(gp_lambda >= 0.0)) bad.push_back("gp_lambda must be >= 0");
  if (!(voxel_coeff >= 0.0)) bad.push_back("voxel_coeff must be >= 0");
  if (hr_squares_per_plane < 1) bad.push_back("hr_squares_per_plane must be >= 1");
  if (fade_epochs < 0) bad.push_back("fade_epochs must be >= 0");
  if (bad.empty()) return;
  std::string msg = "invalid training config:";
  for (const auto& b : bad) msg += "\n  " + b;
  throw ShapeError(msg);
}

double TrainConfig::learning_rate(int stage) const {
  const auto i = static_cast<std::size_t>(std::max(stage, 1) - 1);
  return i < learning_rates.size() ? learning_rates[i] : learning_rates.back();
}

AdamWConfig TrainConfig::optimizer(int stage) const {
  return AdamWConfig{learning_rate(stage), beta1, beta2, adam_eps, weight_decay};
}

void write_loss_history_csv(std::ostream& os, std::span<const StepRecord> history) {
  os << "iteration,stage,epoch,l_D,l_G,l_gp,l_vw,alpha\n";
  const auto old = os.precision(17);
  for (const auto& r : history)
    os << r.iteration << ',' << r.stage << ',' << r.epoch << ',' << r.l_d << ',' << r.l_g << ',' << r.l_gp << ','
       << r.l_vw << ',' << r.alpha << '\n';
  os.precision(old);
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kGeneratorSeedMix = 0x6a09e667f3bcc908ULL;
constexpr std::uint64_t kCriticSeedMix = 0xbb67ae8584caa73bULL;

DiscriminatorConfig checked(DiscriminatorConfig d, const GeneratorConfig& g) {
  std::vector<std::string> bad;
  if (d.stages != g.stages) bad.push_back("discriminator.stages must equal generator.stages");
  if (d.in_channels != g.class_channels()) bad.push_back("discriminator.in_channels must equal phases + 1");
  if (d.entry_edge != g.input_edge) bad.push_back("discriminator.entry_edge must equal generator.input_edge");
  if (!bad.empty()) {
    std::string msg = "generator and discriminator configs disagree:";
    for (const auto& b : bad) msg += "\n  " + b;
    throw ShapeError(msg);
  }
  return d;
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

Trainer::Trainer(GeneratorConfig g, DiscriminatorConfig d, TrainConfig t)
    : gcfg_(g),
      cfg_(std::move(t)),
      gen_(std::move(g), cfg_.seed ^ kGeneratorSeedMix),
      disc_(checked(std::move(d), gcfg_), cfg_.seed ^ kCriticSeedMix),
      rng_(cfg_.seed) {
  cfg_.validate();
  begin_stage(1);
}

double Trainer::alpha() const {
  if (stage_ == 1) return 1.0;
  return FadeState{epoch_, cfg_.fade_epochs}.alpha();
}

void Trainer::begin_stage(int s) {
  if (s < 1 || s > gcfg_.stages) throw ShapeError("stage " + std::to_string(s) + " out of range");
  stage_ = s;
  epoch_ = 0;
  for (Param* p : gen_.params().all())
    if (!p->name.ends_with(".running_mean") && !p->name.ends_with(".running_var")) p->trainable = p->stage >= s;
  g_opt_.reset();
  d_opt_.reset();
}

StepRecord Trainer::step(const LabelVolume& lr, const PGDataset& hr) {
  const int s = stage_;
  const std::int64_t e = gcfg_.input_edge;
  const std::int64_t g = gcfg_.stage_edge(s);
  const int n_cls = gcfg_.class_channels();
  const int batch = cfg_.batch_size;
  StepRecord rec;
  rec.iteration = iteration_;
  rec.stage = s;
  rec.epoch = epoch_;
  rec.alpha = alpha();

  // Low-resolution cubes with noise, and their pore indicator.
  Tensor input;
  Tensor lr_pore(Shape{batch, e, e, e});
  for (int b = 0; b < batch; ++b) {
    const LabelVolume cube = sample_subvolume(lr, Dims3{e, e, e}, rng_);
    for (std::int64_t v = 0; v < cube.dims().count(); ++v)
      lr_pore.data[static_cast<std::size_t>(b * e * e * e + v)] = cube[v] == 0 ? 1.0 : 0.0;
    append_generator_input(input, gcfg_, cube, rng_);
  }

  Tape gt;
  Generator::Options opt;
  opt.stages = s;
  opt.training = true;
  opt.grad = true;
  opt.trainable_from = s;
  opt.reconstruct_all = true;
  opt.record_norm_updates = true;
  const GeneratorForward fw = gen_.forward(gt, gt.constant(std::move(input)), opt);
  for (const auto& so : fw.stages) {
    rec.counts.push_back({so.dense_count, so.mixed_count});
    if (cfg_.check_probability) {
      const auto& d = gt.value(so.dense).data;
      for (std::size_t i = 0; i < d.size() && rec.probability_ok; i += static_cast<std::size_t>(n_cls)) {
        double sum = 0.0;
        for (int k = 0; k < n_cls; ++k) {
          if (!(d[i + static_cast<std::size_t>(k)] >= 0.0)) rec.probability_ok = false;
          sum += d[i + static_cast<std::size_t>(k)];
        }
        if (std::abs(sum - 1.0) > 1e-5) rec.probability_ok = false;
      }
    }
  }
  const Var sr = fw.stages.back().dense;
  const auto planes = slice_planes(gt, sr);

  // Critic updates, one per plane family.
  const StageCritic critic(disc_, s, rec.alpha);
  const AdamWConfig ocfg = cfg_.optimizer(s);
  const auto d_params = disc_.params().up_to_stage(s);
  for (int k = 0; k < 3; ++k) {
    const Tensor real = sample_hr_squares(hr, s, cfg_.hr_squares_per_plane, g, n_cls, rng_);
    Tape dt;
    Var fake_scores = disc_.score(dt, dt.constant(gt.value(planes[static_cast<std::size_t>(k)])), s, rec.alpha, true);
    Var real_scores = disc_.score(dt, dt.constant(real), s, rec.alpha, true);
    PenaltyResult gp = gradient_penalty(dt, critic, real, gt.value(planes[static_cast<std::size_t>(k)]), cfg_.gp_lambda, rng_);
    Var l_d = add(dt, sub(dt, mean(dt, fake_scores), mean(dt, real_scores)), gp.loss);
    rec.plane_l_d[static_cast<std::size_t>(k)] = dt.scalar(l_d);
    rec.plane_l_gp[static_cast<std::size_t>(k)] = gp.value;
    if (!finite(dt.scalar(l_d))) {
      if (!diagnostic_dir.empty()) save_checkpoint(diagnostic_dir / "diagnostic.octw");
      throw Error("non-finite critic loss at iteration " + std::to_string(iteration_) + ", plane " + std::to_string(k));
    }
    disc_.params().zero_grad();
    dt.backward(l_d);
    dt.accumulate_param_grads();
    d_opt_.step(d_params, ocfg);
  }

  // Generator update against the updated critic.
  Var l_vw = voxel_loss(gt, gt.constant(std::move(lr_pore)), sr);
  Var l_g = scale(gt, l_vw, cfg_.voxel_coeff);
  for (const Var& plane : planes) l_g = sub(gt, l_g, mean(gt, disc_.score(gt, plane, s, rec.alpha, false)));
  rec.l_vw = gt.scalar(l_vw);
  rec.l_g = gt.scalar(l_g);
  rec.l_d = (rec.plane_l_d[0] + rec.plane_l_d[1] + rec.plane_l_d[2]) / 3.0;
  rec.l_gp = (rec.plane_l_gp[0] + rec.plane_l_gp[1] + rec.plane_l_gp[2]) / 3.0;
  if (!finite(rec.l_g) || !finite(rec.l_vw)) {
    if (!diagnostic_dir.empty()) save_checkpoint(diagnostic_dir / "diagnostic.octw");
    throw Error("non-finite generator loss at iteration " + std::to_string(iteration_));
  }
  gen_.params().zero_grad();
  gt.backward(l_g);
  gt.accumulate_param_grads();
  g_opt_.step(gen_.params().up_to_stage(s), ocfg);
  gen_.apply_norm_updates(fw.norm_updates);
  ++iteration_;
  return rec;
}

std::vector<StepRecord> Trainer::train_epochs(const LabelVolume& lr, const PGDataset& hr, int epochs) {
  std::vector<StepRecord> history;
  for (int ep = 0; ep < epochs; ++ep) {
    for (int j = 0; j < cfg_.iterations_per_epoch; ++j) history.push_back(step(lr, hr));
    ++epoch_;
  }
  return history;
}

std::vector<StepRecord> Trainer::train_stage(const LabelVolume& lr, const PGDataset& hr, int s) {
  begin_stage(s);
  return train_epochs(lr, hr, cfg_.epochs_per_stage);
}

// ---------------------------------------------------------------------------

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  OctwFile f;
  gen_.params().export_to(f, "g.", stage_);
  disc_.params().export_to(f, "d.", gcfg_.stages);
  g_opt_.export_to(f, "opt.g.");
  d_opt_.export_to(f, "opt.d.");
  nlohmann::ordered_json m;
  m["format"] = "octsr-checkpoint";
  m["version"] = 1;
  m["stage"] = stage_;
  m["epoch"] = epoch_;
  m["iteration"] = iteration_;
  m["generator_optimizer_steps"] = g_opt_.steps();
  m["critic_optimizer_steps"] = d_opt_.steps();
  m["rng"] = rng_state(rng_);
  m["config"] = nlohmann::ordered_json::parse(run_config_json(RunConfig{gcfg_, disc_.config(), cfg_}));
  f.manifest = m.dump(2);
  save_octw(path, f);
}

namespace {

nlohmann::json read_checkpoint_manifest(const OctwFile& f, const std::filesystem::path& path) {
  try {
    nlohmann::json m = nlohmann::json::parse(f.manifest);
    if (m.at("format").get<std::string>() != "octsr-checkpoint" || m.at("version").get<int>() != 1)
      throw FormatError("unsupported checkpoint manifest in " + path.string());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed checkpoint manifest in " + path.string() + ": " + e.what());
  }
}

}  // namespace

RunConfig checkpoint_run_config(const std::filesystem::path& path) {
  const OctwFile f = load_octw(path);
  return parse_run_config(read_checkpoint_manifest(f, path).at("config").dump());
}

Generator load_generator_checkpoint(const std::filesystem::path& path, int* stage_out) {
  const OctwFile f = load_octw(path);
  const nlohmann::json m = read_checkpoint_manifest(f, path);
  GeneratorConfig gc = parse_run_config(m.at("config").dump()).generator;
  const int stage = m.at("stage").get<int>();
  if (stage < 1 || stage > gc.stages)
    throw FormatError("checkpoint stage " + std::to_string(stage) + " out of range");
  gc.stages = stage;
  gc.widths.resize(static_cast<std::size_t>(stage));
  Generator g(gc);
  const std::size_t found = g.params().import_from(f, "g.");
  if (found != g.params().size())
    throw FormatError(path.string() + ": " + std::to_string(found) + " of " + std::to_string(g.params().size()) +
                      " generator tensors present");
  if (stage_out != nullptr) *stage_out = stage;
  return g;
}

void Trainer::load_checkpoint(const std::filesystem::path& path) {
  const OctwFile f = load_octw(path);
  const nlohmann::json m = read_checkpoint_manifest(f, path);
  const RunConfig saved = parse_run_config(m.at("config").dump());
  if (saved.generator.widths != gcfg_.widths || saved.generator.input_edge != gcfg_.input_edge ||
      saved.generator.phases != gcfg_.phases || saved.generator.stages != gcfg_.stages)
    throw ShapeError("checkpoint generator architecture differs from this trainer's");
  const int saved_stage = m.at("stage").get<int>();
  if (saved_stage < 1 || saved_stage > gcfg_.stages)
    throw FormatError("checkpoint stage " + std::to_string(saved_stage) + " out of range");
  if (saved_stage > stage_) begin_stage(saved_stage);
  gen_.params().import_from(f, "g.");
  disc_.params().import_from(f, "d.");
  if (saved_stage == stage_) {
    epoch_ = m.at("epoch").get<int>();
    iteration_ = m.at("iteration").get<std::int64_t>();
    set_rng_state(rng_, m.at("rng").get<std::string>());
    g_opt_.import_from(f, "opt.g.", m.at("generator_optimizer_steps").get<std::int64_t>());
    d_opt_.import_from(f, "opt.d.", m.at("critic_optimizer_steps").get<std::int64_t>());
  }
}

}  // namespace octsr
