// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dhnet/config.hpp"
#include "dhnet/container.hpp"

namespace dhnet {

template <typename T>
const char* precision_name() {
  return sizeof(T) == 4 ? "float" : "double";
}

/// Everything training mutates: the model, the optimizer moments (aligned
/// with canonical parameter order), the step counter and the RNG.  A
/// checkpoint is this struct serialized; loading reproduces it bitwise.
template <typename T>
struct TrainState {
  AppConfig cfg;
  DHNetParams<T> net;
  std::vector<std::pair<std::string, Tensor<T>>> adam_m;
  std::vector<std::pair<std::string, Tensor<T>>> adam_v;
  std::int64_t step = 0;
  Rng rng{0};
};

/// Reads one tensor named "prior" from a container file.
template <typename T>
Tensor<T> load_external_prior(const std::string& path) {
  const Container c = read_container(path);
  const ContainerRecord* r = c.find("prior");
  if (r == nullptr) throw CheckpointError("no 'prior' record in " + path);
  return record_tensor<T>(*r);
}

/// Writes a degradation-prior feature map as a standalone container.
template <typename T>
void save_external_prior(const std::string& path, const Tensor<T>& prior) {
  write_container(path, "", {tensor_record("prior", prior)});
}

/// Fresh state: seeded model, zero moments, step 0, training RNG stream.
/// An external prior (if configured) is loaded and attached here.
template <typename T>
TrainState<T> make_train_state(const AppConfig& cfg) {
  cfg.validate();
  if (cfg.net.precision != precision_name<T>()) {
    throw ConfigError("config precision is " + cfg.net.precision +
                      ", instantiated as " + precision_name<T>());
  }
  TrainState<T> st;
  st.cfg = cfg;
  st.net = make_dhnet<T>(cfg.net, cfg.train.seed);
  if (cfg.net.prior == PriorVariant::kExternal) {
    st.net.provider.external = load_external_prior<T>(cfg.net.prior_path);
  }
  visit_params(st.net, [&](const std::string& name, Param<T>& p) {
    st.adam_m.emplace_back(name, Tensor<T>::zeros(p.value.shape));
    st.adam_v.emplace_back(name, Tensor<T>::zeros(p.value.shape));
  });
  st.rng = Rng::stream(cfg.train.seed, 0x7261696eull);
  st.step = 0;
  return st;
}

/// Container layout: embedded config text (with a [state] trailer), then all
/// parameters in canonical visitation order, then first and second Adam
/// moments under "adam_m." / "adam_v." prefixes.
template <typename T>
void save_train_state(const TrainState<T>& st, const std::string& path) {
  std::vector<ContainerRecord> records;
  auto& net = const_cast<DHNetParams<T>&>(st.net);  // visit_params is non-const
  visit_params(net, [&](const std::string& name, Param<T>& p) {
    records.push_back(tensor_record(name, p.value));
  });
  for (const auto& [name, t] : st.adam_m)
    records.push_back(tensor_record("adam_m." + name, t));
  for (const auto& [name, t] : st.adam_v)
    records.push_back(tensor_record("adam_v." + name, t));
  write_container(path, config_with_state(st.cfg, st.step, st.rng.state()), records);
}

/// Parses just the embedded configuration (and optionally the [state]
/// trailer); used to pick the precision before instantiating the model.
inline AppConfig checkpoint_config(const std::string& path, StateFields* sf = nullptr) {
  const Container c = read_container(path);
  return parse_config(c.config_text, sf);
}

template <typename T>
TrainState<T> load_train_state(const std::string& path) {
  const Container c = read_container(path);
  StateFields sf;
  const AppConfig cfg = parse_config(c.config_text, &sf);
  TrainState<T> st = make_train_state<T>(cfg);

  auto fetch = [&](const std::string& name, Tensor<T>& dst) {
    const ContainerRecord* r = c.find(name);
    if (r == nullptr) throw CheckpointError("checkpoint missing record '" + name + "'");
    const Shape& want = dst.shape;
    if (r->dims.size() != 4 || r->dims[0] != want.n || r->dims[1] != want.c ||
        r->dims[2] != want.h || r->dims[3] != want.w) {
      std::string got = "(";
      for (std::size_t i = 0; i < r->dims.size(); ++i)
        got += (i ? "," : "") + std::to_string(r->dims[i]);
      got += ")";
      throw ShapeMismatchError("record '" + name + "' has shape " + got +
                               ", model expects " + want.str());
    }
    dst = record_tensor<T>(*r);
  };

  visit_params(st.net, [&](const std::string& name, Param<T>& p) {
    fetch(name, p.value);
  });
  for (auto& [name, t] : st.adam_m) fetch("adam_m." + name, t);
  for (auto& [name, t] : st.adam_v) fetch("adam_v." + name, t);
  st.step = sf.step;
  st.rng.set_state(sf.rng);
  return st;
}

}  // namespace dhnet
