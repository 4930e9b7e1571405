// SPDX-License-Identifier: Apache-2.0
#include "octsr/optimizer.hpp"

#include <cmath>

#include "octsr/error.hpp"

namespace octsr {

void adamw_step(std::span<double> p, std::span<const double> g, MomentState& st, std::int64_t step,
                const AdamWConfig& c) {
  if (g.size() != p.size()) throw ShapeError("adamw_step: gradient size does not match parameter size");
  if (st.m.empty()) st.m.assign(p.size(), 0.0);
  if (st.v.empty()) st.v.assign(p.size(), 0.0);
  if (st.m.size() != p.size() || st.v.size() != p.size()) throw ShapeError("adamw_step: moment size mismatch");
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < p.size(); ++i) {
    st.m[i] = c.beta1 * st.m[i] + (1.0 - c.beta1) * g[i];
    st.v[i] = c.beta2 * st.v[i] + (1.0 - c.beta2) * g[i] * g[i];
    const double mh = st.m[i] / bc1;
    const double vh = st.v[i] / bc2;
    p[i] -= c.lr * (mh / (std::sqrt(vh) + c.eps) + c.weight_decay * p[i]);
  }
}

void AdamW::step(const std::vector<Param*>& params, const AdamWConfig& cfg) {
  ++steps_;
  for (Param* p : params) {
    if (!p->trainable) continue;
    MomentState& st = state_[p->name];
    adamw_step(p->value, p->grad, st, steps_, cfg);
    for (auto& v : p->value) v = to_float_precision(v);
    for (auto& v : st.m) v = to_float_precision(v);
    for (auto& v : st.v) v = to_float_precision(v);
  }
}

void AdamW::export_to(OctwFile& file, const std::string& prefix) const {
  for (const auto& [name, st] : state_) {
    const auto n = static_cast<std::int64_t>(st.m.size());
    file.tensors[prefix + "m." + name] = NamedTensor{{n}, std::vector<float>(st.m.begin(), st.m.end())};
    file.tensors[prefix + "v." + name] = NamedTensor{{n}, std::vector<float>(st.v.begin(), st.v.end())};
  }
}

void AdamW::import_from(const OctwFile& file, const std::string& prefix, std::int64_t steps) {
  state_.clear();
  const std::string mp = prefix + "m.";
  for (auto it = file.tensors.lower_bound(mp); it != file.tensors.end() && it->first.starts_with(mp); ++it) {
    const std::string name = it->first.substr(mp.size());
    auto vt = file.tensors.find(prefix + "v." + name);
    if (vt == file.tensors.end()) throw FormatError("optimizer state for " + name + " lacks its second moment");
    MomentState st;
    st.m.assign(it->second.data.begin(), it->second.data.end());
    st.v.assign(vt->second.data.begin(), vt->second.data.end());
    state_[name] = std::move(st);
  }
  steps_ = steps;
}

}  // namespace octsr
