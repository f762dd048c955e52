// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "dhnet/dataset.hpp"
#include "dhnet/dhnet.hpp"
#include "dhnet/losses.hpp"

namespace dhnet {

struct TrainConfig {
  std::int64_t steps = 2000;
  std::int64_t batch = 4;
  std::int64_t patch = 64;
  double lr_peak = 5e-4;
  double lr_floor = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip = 1.0;
  bool flips = true;
  std::uint64_t seed = 1;
  std::int64_t workers = 1;
  std::int64_t log_every = 50;

  void validate() const {
    if (steps < 1) throw ConfigError("train: steps must be positive");
    if (batch < 1) throw ConfigError("train: batch must be positive");
    if (patch < 8 || patch % 8 != 0)
      throw ConfigError("train: patch must be a positive multiple of 8");
    if (!(lr_peak > 0.0) || !(lr_floor > 0.0) || lr_floor > lr_peak)
      throw ConfigError("train: need 0 < lr_floor <= lr_peak");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
      throw ConfigError("train: betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("train: adam_eps must be positive");
    if (!(clip >= 0.0)) throw ConfigError("train: clip must be non-negative");
    if (workers < 1) throw ConfigError("train: workers must be positive");
    if (log_every < 1) throw ConfigError("train: log_every must be positive");
  }
};

/// Everything a run needs, serializable to a canonical sectioned text form.
/// The same text is embedded verbatim in checkpoints, so canonicalization
/// must be byte-stable under parse/serialize round trips.
struct AppConfig {
  NetworkConfig net;
  LossWeights loss;
  LossMode loss_mode = LossMode::kNormalized;
  TrainConfig train;
  DatasetGenSpec data;

  void validate() const {
    net.validate();
    loss.validate();
    train.validate();
    data.validate();
  }
};

/// Optional [state] section carried only inside checkpoints.
struct StateFields {
  std::int64_t step = 0;
  std::uint64_t rng = 0;
  bool present = false;
};

/// Serializes with fixed section/key order and 17-significant-digit floats,
/// so values survive a round trip bitwise and the text itself is stable.
std::string canonical_config(const AppConfig& cfg);

/// Parses the sectioned key=value form.  Unknown sections or keys are
/// errors; a [state] section is captured into `state` when given (and is an
/// error otherwise).
AppConfig parse_config(const std::string& text, StateFields* state = nullptr);

AppConfig load_config_file(const std::string& path);

/// Applies one "section.key=value" override in place.
void apply_override(AppConfig& cfg, const std::string& spec);

/// Canonical text plus a [state] trailer recording optimizer progress.
std::string config_with_state(const AppConfig& cfg, std::int64_t step,
                              std::uint64_t rng);

std::string loss_mode_name(LossMode m);
LossMode loss_mode_from_string(const std::string& s);

}  // namespace dhnet
