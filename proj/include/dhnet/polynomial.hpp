// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "dhnet/errors.hpp"

namespace dhnet {

/// Scalar polynomial h_0 + h_1 x + ... + h_n x^n acting pointwise — the
/// memoryless kernel that stands in for an activation function.
struct Polynomial {
  std::vector<double> coeffs;  // h_0..h_n

  Polynomial() = default;
  explicit Polynomial(std::vector<double> c) : coeffs(std::move(c)) {
    if (coeffs.empty()) throw ConfigError("Polynomial: empty coefficient list");
    for (double v : coeffs)
      if (!std::isfinite(v)) throw ConfigError("Polynomial: non-finite coefficient");
  }

  std::int64_t order() const { return static_cast<std::int64_t>(coeffs.size()) - 1; }

  double eval(double x) const {
    double acc = 0.0;
    for (std::size_t i = coeffs.size(); i-- > 0;) acc = acc * x + coeffs[i];
    return acc;
  }
};

/// Exact coefficients of q(p(x)) for two polynomials of order <= 2; the
/// result has order 4.  This is one stage of the cascade construction:
/// self-composing K times yields order 2^(2^(K-1)).
inline Polynomial compose_second_order(const Polynomial& p, const Polynomial& q) {
  if (p.order() > 2 || q.order() > 2)
    throw ConfigError("compose_second_order: inputs must have order <= 2");
  auto coef = [](const Polynomial& poly, std::size_t i) {
    return i < poly.coeffs.size() ? poly.coeffs[i] : 0.0;
  };
  const double p0 = coef(p, 0), p1 = coef(p, 1), p2 = coef(p, 2);
  const double q0 = coef(q, 0), q1 = coef(q, 1), q2 = coef(q, 2);
  return Polynomial({
      q0 + q1 * p0 + q2 * p0 * p0,
      q1 * p1 + q2 * 2.0 * p0 * p1,
      q1 * p2 + q2 * (p1 * p1 + 2.0 * p0 * p2),
      q2 * 2.0 * p1 * p2,
      q2 * p2 * p2,
  });
}

/// Fixed cubic expansion of the sigmoid about 0: 1/2 + x/4 - x^3/48.
inline Polynomial sigmoid_cubic_reference() {
  return Polynomial({0.5, 0.25, 0.0, -1.0 / 48.0});
}

struct PolyFit {
  Polynomial poly;         // monomial coefficients in the original variable
  double fit_error = 0.0;  // max |poly(x_i) - f(x_i)| over the sample grid
  bool used_fallback = false;
};

namespace detail {

/// Cholesky solve of a symmetric positive-definite system; returns false if a
/// pivot collapses (relative to the largest diagonal entry), signalling
/// ill-conditioning.
inline bool cholesky_solve(std::vector<double>& a, std::vector<double>& b,
                           std::size_t n) {
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, a[i * n + i]);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      if (i == j) {
        if (!(s > max_diag * 1e-13)) return false;
        a[i * n + i] = std::sqrt(s);
      } else {
        a[i * n + j] = s / a[j * n + j];
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= a[i * n + k] * b[k];
    b[i] = s / a[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[k * n + i] * b[k];
    b[i] = s / a[i * n + i];
  }
  return true;
}

/// Monomial coefficients of the Legendre polynomials P_0..P_n via the
/// three-term recurrence.
inline std::vector<std::vector<double>> legendre_monomials(std::size_t n) {
  std::vector<std::vector<double>> p(n + 1);
  p[0] = {1.0};
  if (n >= 1) p[1] = {0.0, 1.0};
  for (std::size_t j = 1; j < n; ++j) {
    std::vector<double> next(j + 2, 0.0);
    for (std::size_t k = 0; k < p[j].size(); ++k)
      next[k + 1] += (2.0 * j + 1.0) / (j + 1.0) * p[j][k];
    for (std::size_t k = 0; k < p[j - 1].size(); ++k)
      next[k] -= static_cast<double>(j) / (j + 1.0) * p[j - 1][k];
    p[j + 1] = std::move(next);
  }
  return p;
}

}  // namespace detail

/// Least-squares polynomial of degree n fitted to f on [lo, hi] over
/// `num_samples` uniform samples (endpoints included).  The primary path
/// solves the monomial normal equations; if those are ill-conditioned it
/// falls back to fitting in a rescaled Legendre basis and converting the
/// result back to monomial form.  fit_error is the max absolute residual
/// over the sample grid.
inline PolyFit fit_memoryless_polynomial(const std::function<double(double)>& f,
                                         double lo, double hi, std::int64_t n,
                                         std::int64_t num_samples) {
  if (!(hi > lo)) throw ConfigError("fit: requires hi > lo");
  if (n < 0) throw ConfigError("fit: negative order");
  if (num_samples < 10 * (n + 1))
    throw ConfigError("fit: need at least 10*(n+1) samples");

  const std::size_t dim = static_cast<std::size_t>(n) + 1;
  const std::int64_t m = num_samples;
  std::vector<double> xs(m), fs(m);
  for (std::int64_t i = 0; i < m; ++i) {
    xs[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(m - 1);
    fs[i] = f(xs[i]);
    if (!std::isfinite(fs[i])) throw NumericError("fit: non-finite sample");
  }

  PolyFit out;
  // primary: monomial normal equations, normalized by the sample count
  {
    std::vector<double> gram(dim * dim, 0.0), rhs(dim, 0.0), powers(dim);
    for (std::int64_t i = 0; i < m; ++i) {
      double p = 1.0;
      for (std::size_t j = 0; j < dim; ++j) {
        powers[j] = p;
        p *= xs[i];
      }
      for (std::size_t j = 0; j < dim; ++j) {
        rhs[j] += powers[j] * fs[i];
        for (std::size_t k = 0; k <= j; ++k) gram[j * dim + k] += powers[j] * powers[k];
      }
    }
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t j = 0; j < dim; ++j) {
      rhs[j] *= inv_m;
      for (std::size_t k = 0; k <= j; ++k) {
        gram[j * dim + k] *= inv_m;
        gram[k * dim + j] = gram[j * dim + k];
      }
    }
    if (detail::cholesky_solve(gram, rhs, dim)) {
      out.poly = Polynomial(rhs);
      for (std::int64_t i = 0; i < m; ++i)
        out.fit_error = std::max(out.fit_error, std::abs(out.poly.eval(xs[i]) - fs[i]));
      return out;
    }
  }

  // fallback: Legendre basis in t = (2x - lo - hi)/(hi - lo)
  out.used_fallback = true;
  const double alpha = 2.0 / (hi - lo);
  const double beta = -(hi + lo) / (hi - lo);
  const auto leg = detail::legendre_monomials(dim - 1);
  std::vector<double> gram(dim * dim, 0.0), rhs(dim, 0.0), basis(dim);
  for (std::int64_t i = 0; i < m; ++i) {
    const double t = alpha * xs[i] + beta;
    for (std::size_t j = 0; j < dim; ++j) {
      double acc = 0.0;
      for (std::size_t k = leg[j].size(); k-- > 0;) acc = acc * t + leg[j][k];
      basis[j] = acc;
    }
    for (std::size_t j = 0; j < dim; ++j) {
      rhs[j] += basis[j] * fs[i];
      for (std::size_t k = 0; k <= j; ++k) gram[j * dim + k] += basis[j] * basis[k];
    }
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t j = 0; j < dim; ++j) {
    rhs[j] *= inv_m;
    for (std::size_t k = 0; k <= j; ++k) {
      gram[j * dim + k] *= inv_m;
      gram[k * dim + j] = gram[j * dim + k];
    }
  }
  if (!detail::cholesky_solve(gram, rhs, dim))
    throw NumericError("fit: normal equations singular even in orthogonal basis");

  // residuals in the stable basis, before any conversion
  for (std::int64_t i = 0; i < m; ++i) {
    const double t = alpha * xs[i] + beta;
    double val = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      double acc = 0.0;
      for (std::size_t k = leg[j].size(); k-- > 0;) acc = acc * t + leg[j][k];
      val += rhs[j] * acc;
    }
    out.fit_error = std::max(out.fit_error, std::abs(val - fs[i]));
  }

  // convert sum_j rhs[j] P_j(alpha x + beta) to monomial coefficients in x:
  // collect the t-monomial coefficients, then substitute t = alpha x + beta
  // by Horner with polynomial arithmetic.
  std::vector<double> tmono(dim, 0.0);
  for (std::size_t j = 0; j < dim; ++j)
    for (std::size_t k = 0; k < leg[j].size(); ++k) tmono[k] += rhs[j] * leg[j][k];
  std::vector<double> mono{0.0};
  for (std::size_t k = dim; k-- > 0;) {
    // mono = mono*(alpha x + beta) + tmono[k]
    std::vector<double> next(mono.size() + 1, 0.0);
    for (std::size_t i = 0; i < mono.size(); ++i) {
      next[i + 1] += mono[i] * alpha;
      next[i] += mono[i] * beta;
    }
    next[0] += tmono[k];
    mono = std::move(next);
  }
  mono.resize(dim, 0.0);
  out.poly = Polynomial(mono);
  return out;
}

/// Max |p(x) - f(x)| over a uniform grid — used to evaluate reference
/// polynomials (e.g. the Taylor cubic) on the same footing as a fit.
inline double max_residual(const Polynomial& p, const std::function<double(double)>& f,
                           double lo, double hi, std::int64_t num_samples) {
  double worst = 0.0;
  for (std::int64_t i = 0; i < num_samples; ++i) {
    const double x =
        lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(num_samples - 1);
    worst = std::max(worst, std::abs(p.eval(x) - f(x)));
  }
  return worst;
}

}  // namespace dhnet
