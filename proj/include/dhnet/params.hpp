// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dhnet/rng.hpp"
#include "dhnet/tape.hpp"
#include "dhnet/tensor.hpp"

namespace dhnet {

/// Callback receiving every trainable parameter with a hierarchical name.
/// Visitation order is the canonical parameter order used by the optimizer,
/// checkpoints and gradient merging.
template <typename T>
using ParamVisitor = std::function<void(const std::string&, Param<T>&)>;

template <typename T>
using NamedParams = std::vector<std::pair<std::string, Param<T>*>>;

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Initialization rule keyed on the parameter's name suffix:
/// *.weight -> Kaiming-style uniform +-1/sqrt(fan_in); *.gamma -> 1;
/// *.bias, *.beta, *.logits -> 0.  Each tensor draws from its own RNG stream
/// derived from (seed, name hash), so results do not depend on visitation
/// order.
template <typename T>
void default_init_param(const std::string& name, Param<T>& p, std::uint64_t seed) {
  const auto dot = name.rfind('.');
  const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
  if (leaf == "gamma") {
    std::fill(p.value.data.begin(), p.value.data.end(), T(1));
    return;
  }
  if (leaf == "bias" || leaf == "beta" || leaf == "logits") {
    std::fill(p.value.data.begin(), p.value.data.end(), T(0));
    return;
  }
  // weights: fan_in from the (out, in/groups, kh, kw) layout
  const std::int64_t fan_in =
      std::max<std::int64_t>(1, p.value.shape.c * p.value.shape.h * p.value.shape.w);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Rng rng = Rng::stream(seed, fnv1a(name));
  p.value.fill_uniform(rng, -bound, bound);
}

}  // namespace dhnet
