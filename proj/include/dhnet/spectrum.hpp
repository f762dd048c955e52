// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "dhnet/tensor.hpp"

namespace dhnet {

/// Twiddle table for an n-point transform: tab[k*n+j] = e^{-2*pi*i*k*j/n}.
struct DftTable {
  std::int64_t n = 0;
  std::vector<double> re, im;

  explicit DftTable(std::int64_t n_) : n(n_), re(n_ * n_), im(n_ * n_) {
    const double step = -2.0 * 3.14159265358979323846 / static_cast<double>(n);
    for (std::int64_t k = 0; k < n; ++k)
      for (std::int64_t j = 0; j < n; ++j) {
        double a = step * static_cast<double>((k * j) % n);
        re[k * n + j] = std::cos(a);
        im[k * n + j] = std::sin(a);
      }
  }
};

/// Full 2-D DFT of one HxW plane via row-column decomposition,
/// O(HW*(H+W)).  Accumulates in double regardless of T.
template <typename T>
void dft2d_plane(const T* x, std::int64_t h, std::int64_t w, const DftTable& th,
                 const DftTable& tw, std::vector<double>& out_re,
                 std::vector<double>& out_im) {
  std::vector<double> row_re(h * w), row_im(h * w);
  // rows: G[p,v] = sum_q x[p,q] e^{-2 pi i v q / W}
  for (std::int64_t p = 0; p < h; ++p) {
    const T* xrow = x + p * w;
    for (std::int64_t v = 0; v < w; ++v) {
      const double* cr = tw.re.data() + v * w;
      const double* ci = tw.im.data() + v * w;
      double ar = 0.0, ai = 0.0;
      for (std::int64_t q = 0; q < w; ++q) {
        const double xv = static_cast<double>(xrow[q]);
        ar += xv * cr[q];
        ai += xv * ci[q];
      }
      row_re[p * w + v] = ar;
      row_im[p * w + v] = ai;
    }
  }
  out_re.assign(h * w, 0.0);
  out_im.assign(h * w, 0.0);
  // columns: F[u,v] = sum_p G[p,v] e^{-2 pi i u p / H}
  for (std::int64_t u = 0; u < h; ++u) {
    const double* cr = th.re.data() + u * h;
    const double* ci = th.im.data() + u * h;
    double* fr = out_re.data() + u * w;
    double* fi = out_im.data() + u * w;
    for (std::int64_t p = 0; p < h; ++p) {
      const double gr = cr[p], gi = ci[p];
      const double* rr = row_re.data() + p * w;
      const double* ri = row_im.data() + p * w;
      for (std::int64_t v = 0; v < w; ++v) {
        fr[v] += gr * rr[v] - gi * ri[v];
        fi[v] += gr * ri[v] + gi * rr[v];
      }
    }
  }
}

/// Adjoint step used when differentiating sum |F(x)|: given the unit-phase
/// field s = F(x)/|F(x)|, writes Re(sum_uv s_uv e^{+2 pi i (up/H + vq/W)})
/// into out (an HxW double buffer).  Same tables as the forward transform
/// (conjugation handled internally).
inline void dft2d_abs_adjoint(const std::vector<double>& s_re,
                              const std::vector<double>& s_im, std::int64_t h,
                              std::int64_t w, const DftTable& th, const DftTable& tw,
                              std::vector<double>& out) {
  std::vector<double> col_re(h * w), col_im(h * w);
  // columns first: C[p,v] = sum_u s[u,v] e^{+2 pi i u p / H}
  for (std::int64_t p = 0; p < h; ++p) {
    const double* cr = th.re.data() + p * h;
    const double* ci = th.im.data() + p * h;
    double* orp = col_re.data() + p * w;
    double* oip = col_im.data() + p * w;
    for (std::int64_t v = 0; v < w; ++v) orp[v] = oip[v] = 0.0;
    for (std::int64_t u = 0; u < h; ++u) {
      const double er = cr[u], ei = -ci[u];  // conjugate: e^{+i...}
      const double* sr = s_re.data() + u * w;
      const double* si = s_im.data() + u * w;
      for (std::int64_t v = 0; v < w; ++v) {
        orp[v] += er * sr[v] - ei * si[v];
        oip[v] += er * si[v] + ei * sr[v];
      }
    }
  }
  out.assign(h * w, 0.0);
  // rows: out[p,q] = Re(sum_v C[p,v] e^{+2 pi i v q / W})
  for (std::int64_t p = 0; p < h; ++p) {
    const double* rr = col_re.data() + p * w;
    const double* ri = col_im.data() + p * w;
    double* op = out.data() + p * w;
    for (std::int64_t q = 0; q < w; ++q) {
      const double* cr = tw.re.data() + q * w;
      const double* ci = tw.im.data() + q * w;
      double acc = 0.0;
      for (std::int64_t v = 0; v < w; ++v)
        acc += rr[v] * cr[v] + ri[v] * ci[v];  // Re(C * e^{+i}) with conj table
      op[q] = acc;
    }
  }
}

}  // namespace dhnet
