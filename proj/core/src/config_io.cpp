// SPDX-License-Identifier: Apache-2.0
#include "octsr/config_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace octsr {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
  std::string msg = "invalid configuration:";
  for (const auto& p : problems) msg += "\n  " + p;
  return msg;
}

// Reads keys of one JSON object into typed fields, collecting problems.
class Section {
 public:
  Section(const json* obj, std::string path, std::vector<std::string>& problems)
      : obj_(obj), path_(std::move(path)), problems_(problems) {
    if (obj_ && !obj_->is_object()) {
      problems_.push_back(path_ + ": expected an object");
      obj_ = nullptr;
    }
  }

  template <typename T>
  void read(const char* key, T& field) {
    seen_.insert(key);
    if (!obj_ || !obj_->contains(key)) return;
    const json& v = obj_->at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("expected true or false");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw std::invalid_argument("expected a number");
      }
      field = v.get<T>();
    } catch (const std::exception& e) {
      problems_.push_back(path_ + "." + key + ": " + e.what());
    }
  }

  void finish() {
    if (!obj_) return;
    for (const auto& [k, _] : obj_->items())
      if (!seen_.count(k)) problems_.push_back(path_ + "." + k + ": unknown key");
  }

 private:
  const json* obj_;
  std::string path_;
  std::vector<std::string>& problems_;
  std::set<std::string> seen_;
};

template <typename T>
void validate_into(const T& cfg, const std::string& section, std::vector<std::string>& problems) {
  try {
    cfg.validate();
  } catch (const ShapeError& e) {
    std::istringstream lines(e.what());
    std::string line;
    std::getline(lines, line);  // heading
    while (std::getline(lines, line)) {
      const auto start = line.find_first_not_of(' ');
      problems.push_back(section + "." + line.substr(start == std::string::npos ? 0 : start));
    }
  }
}

ordered_json to_ordered(const GeneratorConfig& g) {
  return {{"stages", g.stages},           {"input_edge", g.input_edge},
          {"widths", g.widths},           {"phases", g.phases},
          {"noise_channels", g.noise_channels}, {"first_kernel", g.first_kernel},
          {"conv_kernel", g.conv_kernel}, {"norm_eps", g.norm_eps},
          {"norm_momentum", g.norm_momentum}};
}

ordered_json to_ordered(const DiscriminatorConfig& d) {
  return {{"stages", d.stages},         {"in_channels", d.in_channels}, {"entry_edge", d.entry_edge},
          {"widths", d.widths},         {"tail_width", d.tail_width}};
}

ordered_json to_ordered(const TrainConfig& t) {
  return {{"epochs_per_stage", t.epochs_per_stage},
          {"iterations_per_epoch", t.iterations_per_epoch},
          {"batch_size", t.batch_size},
          {"learning_rates", t.learning_rates},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"adam_eps", t.adam_eps},
          {"weight_decay", t.weight_decay},
          {"gp_lambda", t.gp_lambda},
          {"voxel_coeff", t.voxel_coeff},
          {"hr_squares_per_plane", t.hr_squares_per_plane},
          {"fade_epochs", t.fade_epochs},
          {"seed", t.seed},
          {"check_probability", t.check_probability}};
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : Error(join_problems(problems)), problems_(std::move(problems)) {}

RunConfig reference_run_config() {
  RunConfig r;
  r.generator = GeneratorConfig::reference();
  r.discriminator = DiscriminatorConfig::reference();
  return r;
}

RunConfig parse_run_config(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError({std::string("not valid JSON: ") + e.what()});
  }
  std::vector<std::string> problems;
  if (!root.is_object()) throw ConfigError({"top level must be an object"});
  for (const auto& [k, _] : root.items())
    if (k != "generator" && k != "discriminator" && k != "training") problems.push_back(k + ": unknown section");

  RunConfig r;
  auto find = [&](const char* k) -> const json* { return root.contains(k) ? &root.at(k) : nullptr; };

  Section g(find("generator"), "generator", problems);
  g.read("stages", r.generator.stages);
  g.read("input_edge", r.generator.input_edge);
  g.read("widths", r.generator.widths);
  g.read("phases", r.generator.phases);
  g.read("noise_channels", r.generator.noise_channels);
  g.read("first_kernel", r.generator.first_kernel);
  g.read("conv_kernel", r.generator.conv_kernel);
  g.read("norm_eps", r.generator.norm_eps);
  g.read("norm_momentum", r.generator.norm_momentum);
  g.finish();

  r.discriminator = DiscriminatorConfig::for_generator(r.generator, r.generator.widths,
                                                       r.generator.widths.empty() ? 1 : r.generator.widths.front());
  Section d(find("discriminator"), "discriminator", problems);
  d.read("stages", r.discriminator.stages);
  d.read("in_channels", r.discriminator.in_channels);
  d.read("entry_edge", r.discriminator.entry_edge);
  d.read("widths", r.discriminator.widths);
  d.read("tail_width", r.discriminator.tail_width);
  d.finish();

  Section t(find("training"), "training", problems);
  t.read("epochs_per_stage", r.training.epochs_per_stage);
  t.read("iterations_per_epoch", r.training.iterations_per_epoch);
  t.read("batch_size", r.training.batch_size);
  t.read("learning_rates", r.training.learning_rates);
  t.read("beta1", r.training.beta1);
  t.read("beta2", r.training.beta2);
  t.read("adam_eps", r.training.adam_eps);
  t.read("weight_decay", r.training.weight_decay);
  t.read("gp_lambda", r.training.gp_lambda);
  t.read("voxel_coeff", r.training.voxel_coeff);
  t.read("hr_squares_per_plane", r.training.hr_squares_per_plane);
  t.read("fade_epochs", r.training.fade_epochs);
  t.read("seed", r.training.seed);
  t.read("check_probability", r.training.check_probability);
  t.finish();

  // Keys that failed to parse are checked at their defaults.
  validate_into(r.generator, "generator", problems);
  validate_into(r.discriminator, "discriminator", problems);
  validate_into(r.training, "training", problems);
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return r;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(read_text_file(path)); }

std::string run_config_json(const RunConfig& cfg) {
  ordered_json j;
  j["generator"] = to_ordered(cfg.generator);
  j["discriminator"] = to_ordered(cfg.discriminator);
  j["training"] = to_ordered(cfg.training);
  return j.dump(2);
}

// ---------------------------------------------------------------------------

ThresholdTable parse_threshold_table(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError({std::string("not valid JSON: ") + e.what()});
  }
  std::vector<std::string> problems;
  std::vector<std::string> names;
  std::vector<ThresholdRange> ranges;
  if (!root.is_object() || !root.contains("phases") || !root.at("phases").is_array())
    problems.push_back("phases: expected an array of names");
  else
    for (const auto& n : root.at("phases")) {
      if (n.is_string()) names.push_back(n.get<std::string>());
      else problems.push_back("phases: every entry must be a string");
    }
  if (!root.is_object() || !root.contains("ranges") || !root.at("ranges").is_array()) {
    problems.push_back("ranges: expected an array");
  } else {
    std::size_t i = 0;
    for (const auto& r : root.at("ranges")) {
      const std::string where = "ranges[" + std::to_string(i++) + "]";
      if (!r.is_object() || !r.contains("lo") || !r.contains("hi") || !r.contains("phase") ||
          !r.at("lo").is_number_unsigned() || !r.at("hi").is_number_unsigned()) {
        problems.push_back(where + ": needs unsigned lo, hi and a phase");
        continue;
      }
      ThresholdRange tr;
      tr.lo = r.at("lo").get<std::uint32_t>();
      tr.hi = r.at("hi").get<std::uint32_t>();
      const json& ph = r.at("phase");
      if (ph.is_number_unsigned() && ph.get<std::size_t>() < names.size()) {
        tr.phase = static_cast<std::uint8_t>(ph.get<std::size_t>());
      } else if (ph.is_string()) {
        auto it = std::find(names.begin(), names.end(), ph.get<std::string>());
        if (it == names.end()) {
          problems.push_back(where + ".phase: unknown phase " + ph.get<std::string>());
          continue;
        }
        tr.phase = static_cast<std::uint8_t>(it - names.begin());
      } else {
        problems.push_back(where + ".phase: expected a phase name or index");
        continue;
      }
      ranges.push_back(tr);
    }
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
  try {
    return ThresholdTable(std::move(names), std::move(ranges));
  } catch (const Error& e) {
    throw ConfigError({e.what()});
  }
}

ThresholdTable load_threshold_table(const std::filesystem::path& path) {
  return parse_threshold_table(read_text_file(path));
}

std::string threshold_table_json(const ThresholdTable& table) {
  ordered_json j;
  j["phases"] = table.phase_names();
  j["ranges"] = ordered_json::array();
  for (const auto& r : table.ranges())
    j["ranges"].push_back({{"lo", r.lo}, {"hi", r.hi}, {"phase", table.phase_names()[r.phase]}});
  return j.dump(2);
}

}  // namespace octsr
