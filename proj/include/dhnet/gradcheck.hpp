// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dhnet/rng.hpp"
#include "dhnet/tape.hpp"
#include "dhnet/tensor.hpp"

namespace dhnet {

struct GradCheckResult {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::int64_t coords_checked = 0;
  // location of the worst relative error, for diagnostics
  std::size_t worst_param = 0;
  std::int64_t worst_coord = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  std::string str() const {
    return "max_rel_err=" + std::to_string(max_rel_err) +
           " max_abs_err=" + std::to_string(max_abs_err) + " at param " +
           std::to_string(worst_param) + " coord " + std::to_string(worst_coord) +
           " analytic=" + std::to_string(worst_analytic) +
           " numeric=" + std::to_string(worst_numeric) + " (" +
           std::to_string(coords_checked) + " coords)";
  }
};

/// Compares reverse-mode gradients against central finite differences.
///
/// `build` constructs the graph from the params' *current* values and returns
/// a scalar root; it is re-invoked for every probe, so it must read the param
/// tensors fresh each time.  Relative error uses
/// |a - f| / max(|a|, |f|, denom_floor); the floor keeps coordinates whose
/// true gradient sits at the finite-difference noise level (|a|, |f| both
/// far below any meaningful scale) from reporting pure round-off as error.
/// When a param has more coordinates than `max_coords_per_param` (and that
/// limit is >= 0), a deterministic sample of coordinates is probed instead
/// of all of them.
template <typename T>
GradCheckResult grad_check(const std::vector<Param<T>*>& params,
                           const std::function<Var<T>(Tape<T>&)>& build,
                           double h = 1e-5,
                           std::int64_t max_coords_per_param = -1,
                           std::uint64_t coord_seed = 0x5eedf00d,
                           double denom_floor = 1e-6) {
  GradStore<T> store;
  Tape<T> tape(&store);
  Var<T> root = build(tape);
  tape.backward(root);

  auto eval = [&]() -> double {
    Tape<T> t;
    return static_cast<double>(t.value(build(t)).data[0]);
  };

  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param<T>* p = params[pi];
    Tensor<T> g = store.get_or_zero(p);
    const std::int64_t ne = p->value.numel();
    std::vector<std::int64_t> coords;
    if (max_coords_per_param < 0 || ne <= max_coords_per_param) {
      coords.resize(static_cast<std::size_t>(ne));
      for (std::int64_t i = 0; i < ne; ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
      Rng rng = Rng::stream(coord_seed, pi);
      for (std::int64_t k = 0; k < max_coords_per_param; ++k)
        coords.push_back(static_cast<std::int64_t>(rng.uniform_index(ne)));
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }

    for (std::int64_t i : coords) {
      const T saved = p->value.data[static_cast<std::size_t>(i)];
      p->value.data[static_cast<std::size_t>(i)] = saved + static_cast<T>(h);
      const double fp = eval();
      p->value.data[static_cast<std::size_t>(i)] = saved - static_cast<T>(h);
      const double fm = eval();
      p->value.data[static_cast<std::size_t>(i)] = saved;

      const double fd = (fp - fm) / (2.0 * h);
      const double an = static_cast<double>(g.data[static_cast<std::size_t>(i)]);
      const double abs_err = std::abs(an - fd);
      const double rel_err =
          abs_err / std::max({std::abs(an), std::abs(fd), denom_floor});
      res.max_abs_err = std::max(res.max_abs_err, abs_err);
      if (rel_err > res.max_rel_err) {
        res.max_rel_err = rel_err;
        res.worst_param = pi;
        res.worst_coord = i;
        res.worst_analytic = an;
        res.worst_numeric = fd;
      }
      ++res.coords_checked;
    }
  }
  return res;
}

}  // namespace dhnet
