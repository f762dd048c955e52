// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>

#include "dhnet/errors.hpp"

namespace dhnet {

using BigInt = boost::multiprecision::cpp_int;

/// Inputs to the kernel-parameter-count formulas.  L is the channel/term
/// count; p1/p2 the kernel half-widths; n the target polynomial order (dense
/// mode); K the cascade depth; Q the separable rank.
struct ComplexityQuery {
  std::int64_t l = 1;
  std::int64_t p1 = 1;
  std::int64_t p2 = 1;
  std::int64_t n = 1;  // dense
  std::int64_t k = 1;  // cascaded / separable
  std::int64_t q = 1;  // separable
};

enum class VolterraMode { kDense, kCascaded, kSeparable };

/// Polynomial order reached by self-composing a second-order kernel K times:
/// 2^(2^(K-1)).
inline BigInt order_from_cascade_depth(std::int64_t k) {
  if (k < 1) throw ConfigError("cascade depth must be >= 1");
  if (k > 16) throw ConfigError("cascade depth too large to materialize the order");
  const unsigned exp2 = 1u << static_cast<unsigned>(k - 1);
  return boost::multiprecision::pow(BigInt(2), exp2);
}

/// Weight-element counts for the three realizations of an order-n Volterra
/// filter.  dense: sum_{d=1..n} M^d; cascaded second-order stages:
/// sum_{k=1..K} (M + M^2); separable rank-Q stages: sum_{k=1..K} (M + 2 Q M),
/// all with M = L (2 p1 + 1)(2 p2 + 1).  Biases are excluded throughout.
inline BigInt volterra_complexity(const ComplexityQuery& query, VolterraMode mode) {
  if (query.l < 1 || query.p1 < 0 || query.p2 < 0)
    throw ConfigError("complexity: L must be >= 1 and half-widths >= 0");
  const BigInt m = BigInt(query.l) * (2 * query.p1 + 1) * (2 * query.p2 + 1);
  switch (mode) {
    case VolterraMode::kDense: {
      if (query.n < 1) throw ConfigError("complexity: dense order must be >= 1");
      if (query.n > (std::int64_t{1} << 20))
        throw ConfigError("complexity: dense order too large to materialize");
      if (m == 1) return BigInt(query.n);
      // geometric sum (M^(n+1) - M)/(M - 1)
      const BigInt top = boost::multiprecision::pow(m, static_cast<unsigned>(query.n + 1));
      return (top - m) / (m - 1);
    }
    case VolterraMode::kCascaded: {
      if (query.k < 1) throw ConfigError("complexity: cascade depth must be >= 1");
      return BigInt(query.k) * (m + m * m);
    }
    case VolterraMode::kSeparable: {
      if (query.k < 1) throw ConfigError("complexity: cascade depth must be >= 1");
      if (query.q < 0) throw ConfigError("complexity: rank must be >= 0");
      return BigInt(query.k) * (m + 2 * query.q * m);
    }
  }
  throw ConfigError("complexity: unknown mode");
}

}  // namespace dhnet
