// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "dhnet/conv.hpp"
#include "dhnet/spectrum.hpp"
#include "dhnet/tape.hpp"
#include "dhnet/tensor.hpp"

namespace dhnet {

// ---------------------------------------------------------------------------
// convolution

template <typename T>
Var<T> op_conv2d(Tape<T>& tp, Var<T> x, Var<T> w, std::optional<Var<T>> b,
                 ConvSpec spec) {
  const Tensor<T>& xv = tp.value(x);
  const Tensor<T>& wv = tp.value(w);
  const Tensor<T>* bv = b ? &tp.value(*b) : nullptr;
  Tensor<T> y = conv2d_forward(xv, wv, bv, spec);
  std::vector<std::int32_t> parents{x.id, w.id};
  if (b) parents.push_back(b->id);
  const bool has_bias = b.has_value();
  return tp.emit(
      OpKind::kConv2d, std::move(y), std::move(parents),
      [spec, has_bias](Tape<T>& t, std::int32_t id) {
        const auto& ps = t.parents(id);
        const Tensor<T>& dy = t.grad_buffer(id);
        const Tensor<T>& xvv = t.value_of(ps[0]);
        const Tensor<T>& wvv = t.value_of(ps[1]);
        Tensor<T> dx, dw, db;
        conv2d_backward(xvv, wvv, spec, dy, &dx, &dw, has_bias ? &db : nullptr);
        add_scaled(t.grad_buffer(ps[0]), dx, T(1));
        add_scaled(t.grad_buffer(ps[1]), dw, T(1));
        if (has_bias) add_scaled(t.grad_buffer(ps[2]), db, T(1));
      });
}

template <typename T>
Var<T> apply_conv(Tape<T>& tp, Var<T> x, const ConvParams<T>& p) {
  Var<T> w = tp.param(p.weight);
  std::optional<Var<T>> b;
  if (p.bias) b = tp.param(*p.bias);
  return op_conv2d(tp, x, w, b, p.spec);
}

// ---------------------------------------------------------------------------
// layer norm (across channels, per spatial position)

template <typename T>
struct LayerNormParams {
  Param<T> gamma;  // (1,C,1,1)
  Param<T> beta;   // (1,C,1,1)

  LayerNormParams() = default;
  explicit LayerNormParams(std::int64_t c)
      : gamma(Tensor<T>::full(Shape{1, c, 1, 1}, T(1))), beta(Shape{1, c, 1, 1}) {}
};

/// Normalizes each (n,h,w) column over channels to zero mean / unit variance,
/// then applies per-channel affine.  eps sits under the square root.
template <typename T>
Var<T> op_layer_norm(Tape<T>& tp, Var<T> x, Var<T> gamma, Var<T> beta,
                     double eps = 1e-6) {
  const Tensor<T>& xv = tp.value(x);
  const Shape s = xv.shape;
  const Tensor<T>& gv = tp.value(gamma);
  const Tensor<T>& bv = tp.value(beta);
  if (gv.shape != Shape{1, s.c, 1, 1} || bv.shape != Shape{1, s.c, 1, 1})
    throw ConfigError("layer_norm: affine shape must be 1x" + std::to_string(s.c) +
                      "x1x1");
  const std::int64_t C = s.c, HW = s.h * s.w;
  Tensor<T> xhat(s);
  Tensor<T> inv_std(Shape{s.n, 1, s.h, s.w});
  Tensor<T> y(s);
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t i = 0; i < HW; ++i) {
      double mean = 0.0;
      for (std::int64_t c = 0; c < C; ++c)
        mean += static_cast<double>(xv.data[(n * C + c) * HW + i]);
      mean /= static_cast<double>(C);
      double var = 0.0;
      for (std::int64_t c = 0; c < C; ++c) {
        double d = static_cast<double>(xv.data[(n * C + c) * HW + i]) - mean;
        var += d * d;
      }
      var /= static_cast<double>(C);
      double inv = 1.0 / std::sqrt(var + eps);
      inv_std.data[n * HW + i] = static_cast<T>(inv);
      for (std::int64_t c = 0; c < C; ++c) {
        double xh = (static_cast<double>(xv.data[(n * C + c) * HW + i]) - mean) * inv;
        xhat.data[(n * C + c) * HW + i] = static_cast<T>(xh);
        y.data[(n * C + c) * HW + i] = static_cast<T>(
            static_cast<double>(gv.data[c]) * xh + static_cast<double>(bv.data[c]));
      }
    }
  }
  return tp.emit(
      OpKind::kLayerNorm, std::move(y), {x.id, gamma.id, beta.id},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), C,
       HW](Tape<T>& t, std::int32_t id) {
        const auto& ps = t.parents(id);
        const Tensor<T>& dy = t.grad_buffer(id);
        const Tensor<T>& gv = t.value_of(ps[1]);
        Tensor<T>& dx = t.grad_buffer(ps[0]);
        Tensor<T>& dg = t.grad_buffer(ps[1]);
        Tensor<T>& db = t.grad_buffer(ps[2]);
        const std::int64_t N = dy.shape.n;
        for (std::int64_t n = 0; n < N; ++n) {
          for (std::int64_t i = 0; i < HW; ++i) {
            double sum_dxh = 0.0, sum_dxh_xh = 0.0;
            for (std::int64_t c = 0; c < C; ++c) {
              const std::int64_t k = (n * C + c) * HW + i;
              double dyv = static_cast<double>(dy.data[k]);
              double xh = static_cast<double>(xhat.data[k]);
              dg.data[c] += static_cast<T>(dyv * xh);
              db.data[c] += static_cast<T>(dyv);
              double dxh = dyv * static_cast<double>(gv.data[c]);
              sum_dxh += dxh;
              sum_dxh_xh += dxh * xh;
            }
            const double inv = static_cast<double>(inv_std.data[n * HW + i]);
            const double mc = 1.0 / static_cast<double>(C);
            for (std::int64_t c = 0; c < C; ++c) {
              const std::int64_t k = (n * C + c) * HW + i;
              double dxh = static_cast<double>(dy.data[k]) * static_cast<double>(gv.data[c]);
              double xh = static_cast<double>(xhat.data[k]);
              dx.data[k] += static_cast<T>(
                  inv * (dxh - mc * sum_dxh - xh * mc * sum_dxh_xh));
            }
          }
        }
      });
}

template <typename T>
Var<T> apply_layer_norm(Tape<T>& tp, Var<T> x, const LayerNormParams<T>& p,
                        double eps = 1e-6) {
  return op_layer_norm(tp, x, tp.param(p.gamma), tp.param(p.beta), eps);
}

template <typename T, typename Fn>
void visit_params(LayerNormParams<T>& p, const std::string& prefix, Fn&& fn) {
  fn(prefix + ".gamma", p.gamma);
  fn(prefix + ".beta", p.beta);
}

// ---------------------------------------------------------------------------
// shape/motion ops

/// (N,C,H,W) -> (N,C,1,1), mean over spatial positions.
template <typename T>
Var<T> op_global_avg_pool(Tape<T>& tp, Var<T> x) {
  const Tensor<T>& xv = tp.value(x);
  const Shape s = xv.shape;
  const std::int64_t HW = s.h * s.w;
  Tensor<T> y(Shape{s.n, s.c, 1, 1});
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c) {
      const T* p = xv.plane(n, c);
      double acc = 0.0;
      for (std::int64_t i = 0; i < HW; ++i) acc += static_cast<double>(p[i]);
      y.at(n, c, 0, 0) = static_cast<T>(acc / static_cast<double>(HW));
    }
  return tp.emit(OpKind::kGlobalAvgPool, std::move(y), {x.id},
                 [HW](Tape<T>& t, std::int32_t id) {
                   const Tensor<T>& dy = t.grad_buffer(id);
                   Tensor<T>& dx = t.grad_buffer(t.parents(id)[0]);
                   const Shape s = dx.shape;
                   for (std::int64_t n = 0; n < s.n; ++n)
                     for (std::int64_t c = 0; c < s.c; ++c) {
                       const T g = static_cast<T>(
                           static_cast<double>(dy.at(n, c, 0, 0)) /
                           static_cast<double>(HW));
                       T* p = dx.plane(n, c);
                       for (std::int64_t i = 0; i < HW; ++i) p[i] += g;
                     }
                 });
}

/// (N, C*r^2, H, W) -> (N, C, H*r, W*r); input channel c*r^2 + dh*r + dw
/// lands at output (c, h*r+dh, w*r+dw).
template <typename T>
Var<T> op_pixel_shuffle(Tape<T>& tp, Var<T> x, std::int64_t r) {
  const Tensor<T>& xv = tp.value(x);
  const Shape s = xv.shape;
  if (r < 1 || s.c % (r * r) != 0)
    throw ConfigError("pixel_shuffle: channels not divisible by r^2");
  const std::int64_t OC = s.c / (r * r);
  Tensor<T> y(Shape{s.n, OC, s.h * r, s.w * r});
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < OC; ++c)
      for (std::int64_t dh = 0; dh < r; ++dh)
        for (std::int64_t dw = 0; dw < r; ++dw) {
          const T* xp = xv.plane(n, c * r * r + dh * r + dw);
          for (std::int64_t h = 0; h < s.h; ++h) {
            T* yrow = y.plane(n, c) + (h * r + dh) * (s.w * r) + dw;
            const T* xrow = xp + h * s.w;
            for (std::int64_t w = 0; w < s.w; ++w) yrow[w * r] = xrow[w];
          }
        }
  return tp.emit(OpKind::kPixelShuffle, std::move(y), {x.id},
                 [r, s](Tape<T>& t, std::int32_t id) {
                   const Tensor<T>& dy = t.grad_buffer(id);
                   Tensor<T>& dx = t.grad_buffer(t.parents(id)[0]);
                   const std::int64_t OC = s.c / (r * r);
                   for (std::int64_t n = 0; n < s.n; ++n)
                     for (std::int64_t c = 0; c < OC; ++c)
                       for (std::int64_t dh = 0; dh < r; ++dh)
                         for (std::int64_t dw = 0; dw < r; ++dw) {
                           T* dxp = dx.plane(n, c * r * r + dh * r + dw);
                           for (std::int64_t h = 0; h < s.h; ++h) {
                             const T* dyrow =
                                 dy.plane(n, c) + (h * r + dh) * (s.w * r) + dw;
                             T* dxrow = dxp + h * s.w;
                             for (std::int64_t w = 0; w < s.w; ++w)
                               dxrow[w] += dyrow[w * r];
                           }
                         }
                 });
}

// ---------------------------------------------------------------------------
// elementwise / broadcast arithmetic

namespace detail {

template <typename T>
Var<T> binary_same_shape(Tape<T>& tp, OpKind k, Var<T> a, Var<T> b) {
  const Tensor<T>& av = tp.value(a);
  const Tensor<T>& bv = tp.value(b);
  check_same_shape(av, bv, op_kind_name(k));
  Tensor<T> y(av.shape);
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    switch (k) {
      case OpKind::kAdd: y.data[i] = av.data[i] + bv.data[i]; break;
      case OpKind::kSub: y.data[i] = av.data[i] - bv.data[i]; break;
      case OpKind::kMul: y.data[i] = av.data[i] * bv.data[i]; break;
      default: throw ConfigError("binary_same_shape: bad op");
    }
  }
  return tp.emit(k, std::move(y), {a.id, b.id}, [k](Tape<T>& t, std::int32_t id) {
    const auto& ps = t.parents(id);
    const Tensor<T>& dy = t.grad_buffer(id);
    Tensor<T>& da = t.grad_buffer(ps[0]);
    Tensor<T>& db = t.grad_buffer(ps[1]);
    if (k == OpKind::kMul) {
      const Tensor<T>& av = t.value_of(ps[0]);
      const Tensor<T>& bv = t.value_of(ps[1]);
      for (std::size_t i = 0; i < dy.data.size(); ++i) {
        da.data[i] += dy.data[i] * bv.data[i];
        db.data[i] += dy.data[i] * av.data[i];
      }
    } else {
      const T sb = (k == OpKind::kSub) ? T(-1) : T(1);
      for (std::size_t i = 0; i < dy.data.size(); ++i) {
        da.data[i] += dy.data[i];
        db.data[i] += sb * dy.data[i];
      }
    }
  });
}

}  // namespace detail

template <typename T>
Var<T> op_add(Tape<T>& tp, Var<T> a, Var<T> b) {
  return detail::binary_same_shape(tp, OpKind::kAdd, a, b);
}
template <typename T>
Var<T> op_sub(Tape<T>& tp, Var<T> a, Var<T> b) {
  return detail::binary_same_shape(tp, OpKind::kSub, a, b);
}
template <typename T>
Var<T> op_mul(Tape<T>& tp, Var<T> a, Var<T> b) {
  return detail::binary_same_shape(tp, OpKind::kMul, a, b);
}

template <typename T>
Var<T> op_scale(Tape<T>& tp, Var<T> x, double c) {
  const Tensor<T>& xv = tp.value(x);
  Tensor<T> y(xv.shape);
  for (std::size_t i = 0; i < y.data.size(); ++i)
    y.data[i] = static_cast<T>(c * static_cast<double>(xv.data[i]));
  return tp.emit(OpKind::kScale, std::move(y), {x.id},
                 [c](Tape<T>& t, std::int32_t id) {
                   const Tensor<T>& dy = t.grad_buffer(id);
                   Tensor<T>& dx = t.grad_buffer(t.parents(id)[0]);
                   for (std::size_t i = 0; i < dy.data.size(); ++i)
                     dx.data[i] += static_cast<T>(c * static_cast<double>(dy.data[i]));
                 });
}

template <typename T>
Var<T> op_add_scalar(Tape<T>& tp, Var<T> x, double c) {
  const Tensor<T>& xv = tp.value(x);
  Tensor<T> y(xv.shape);
  for (std::size_t i = 0; i < y.data.size(); ++i)
    y.data[i] = static_cast<T>(static_cast<double>(xv.data[i]) + c);
  return tp.emit(OpKind::kAddScalar, std::move(y), {x.id},
                 [](Tape<T>& t, std::int32_t id) {
                   const Tensor<T>& dy = t.grad_buffer(id);
                   add_scaled(t.grad_buffer(t.parents(id)[0]), dy, T(1));
                 });
}

/// x:(N,C,H,W) scaled per channel by g:(N,C,1,1) or (1,C,1,1) (broadcast over
/// the batch).
template <typename T>
Var<T> op_scale_channels(Tape<T>& tp, Var<T> x, Var<T> g) {
  const Tensor<T>& xv = tp.value(x);
  const Tensor<T>& gv = tp.value(g);
  const Shape s = xv.shape;
  if (gv.shape.c != s.c || gv.shape.h != 1 || gv.shape.w != 1 ||
      (gv.shape.n != s.n && gv.shape.n != 1))
    throw ConfigError("scale_channels: gate shape " + gv.shape.str() +
                      " incompatible with " + s.str());
  const std::int64_t HW = s.h * s.w;
  const bool bcast = gv.shape.n == 1;
  Tensor<T> y(s);
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c) {
      const T gvv = gv.at(bcast ? 0 : n, c, 0, 0);
      const T* xp = xv.plane(n, c);
      T* yp = y.plane(n, c);
      for (std::int64_t i = 0; i < HW; ++i) yp[i] = gvv * xp[i];
    }
  return tp.emit(
      OpKind::kScaleChannels, std::move(y), {x.id, g.id},
      [bcast, HW](Tape<T>& t, std::int32_t id) {
        const auto& ps = t.parents(id);
        const Tensor<T>& dy = t.grad_buffer(id);
        const Tensor<T>& xvv = t.value_of(ps[0]);
        const Tensor<T>& gvv = t.value_of(ps[1]);
        Tensor<T>& dx = t.grad_buffer(ps[0]);
        Tensor<T>& dg = t.grad_buffer(ps[1]);
        const Shape s = xvv.shape;
        for (std::int64_t n = 0; n < s.n; ++n)
          for (std::int64_t c = 0; c < s.c; ++c) {
            const T gval = gvv.at(bcast ? 0 : n, c, 0, 0);
            const T* dyp = dy.plane(n, c);
            const T* xp = xvv.plane(n, c);
            T* dxp = dx.plane(n, c);
            double acc = 0.0;
            for (std::int64_t i = 0; i < HW; ++i) {
              dxp[i] += gval * dyp[i];
              acc += static_cast<double>(dyp[i]) * static_cast<double>(xp[i]);
            }
            dg.at(bcast ? 0 : n, c, 0, 0) += static_cast<T>(acc);
          }
      });
}

template <typename T>
Var<T> op_concat_channels(Tape<T>& tp, const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw ConfigError("concat_channels: empty input list");
  const Shape s0 = tp.value(xs[0]).shape;
  std::int64_t ctot = 0;
  for (Var<T> v : xs) {
    const Shape s = tp.value(v).shape;
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
      throw ConfigError("concat_channels: mismatched shapes " + s0.str() + " vs " +
                        s.str());
    ctot += s.c;
  }
  Tensor<T> y(Shape{s0.n, ctot, s0.h, s0.w});
  std::vector<std::int32_t> parents;
  std::vector<std::int64_t> widths;
  const std::int64_t HW = s0.h * s0.w;
  std::int64_t coff = 0;
  for (Var<T> v : xs) {
    const Tensor<T>& xv = tp.value(v);
    for (std::int64_t n = 0; n < s0.n; ++n)
      for (std::int64_t c = 0; c < xv.shape.c; ++c) {
        const T* src = xv.plane(n, c);
        T* dst = y.plane(n, coff + c);
        for (std::int64_t i = 0; i < HW; ++i) dst[i] = src[i];
      }
    parents.push_back(v.id);
    widths.push_back(xv.shape.c);
    coff += xv.shape.c;
  }
  return tp.emit(OpKind::kConcatChannels, std::move(y), std::move(parents),
                 [widths, HW](Tape<T>& t, std::int32_t id) {
                   const auto& ps = t.parents(id);
                   const Tensor<T>& dy = t.grad_buffer(id);
                   std::int64_t coff = 0;
                   for (std::size_t k = 0; k < ps.size(); ++k) {
                     Tensor<T>& dx = t.grad_buffer(ps[k]);
                     for (std::int64_t n = 0; n < dy.shape.n; ++n)
                       for (std::int64_t c = 0; c < widths[k]; ++c) {
                         const T* src = dy.plane(n, coff + c);
                         T* dst = dx.plane(n, c);
                         for (std::int64_t i = 0; i < HW; ++i) dst[i] += src[i];
                       }
                     coff += widths[k];
                   }
                 });
}

// ---------------------------------------------------------------------------
// mixing

/// Softmax over the channel axis of an (N,S,1,1) tensor.
template <typename T>
Var<T> op_softmax_channels(Tape<T>& tp, Var<T> x) {
  const Tensor<T>& xv = tp.value(x);
  const Shape s = xv.shape;
  if (s.h != 1 || s.w != 1)
    throw ConfigError("softmax_channels: expected Nx S x1x1, got " + s.str());
  Tensor<T> y(s);
  for (std::int64_t n = 0; n < s.n; ++n) {
    double mx = -1e300;
    for (std::int64_t c = 0; c < s.c; ++c)
      mx = std::max(mx, static_cast<double>(xv.at(n, c, 0, 0)));
    double z = 0.0;
    for (std::int64_t c = 0; c < s.c; ++c)
      z += std::exp(static_cast<double>(xv.at(n, c, 0, 0)) - mx);
    for (std::int64_t c = 0; c < s.c; ++c)
      y.at(n, c, 0, 0) = static_cast<T>(
          std::exp(static_cast<double>(xv.at(n, c, 0, 0)) - mx) / z);
  }
  return tp.emit(OpKind::kSoftmaxChannels, std::move(y), {x.id},
                 [](Tape<T>& t, std::int32_t id) {
                   const Tensor<T>& dy = t.grad_buffer(id);
                   const Tensor<T>& yv = t.value_of(id);
                   Tensor<T>& dx = t.grad_buffer(t.parents(id)[0]);
                   const Shape s = yv.shape;
                   for (std::int64_t n = 0; n < s.n; ++n) {
                     double dot = 0.0;
                     for (std::int64_t c = 0; c < s.c; ++c)
                       dot += static_cast<double>(dy.at(n, c, 0, 0)) *
                              static_cast<double>(yv.at(n, c, 0, 0));
                     for (std::int64_t c = 0; c < s.c; ++c)
                       dx.at(n, c, 0, 0) += static_cast<T>(
                           static_cast<double>(yv.at(n, c, 0, 0)) *
                           (static_cast<double>(dy.at(n, c, 0, 0)) - dot));
                   }
                 });
}

/// y[n] = sum_s w[n,s] * E_s[n].  Experts all (N,C,H,W); weights (N,S,1,1) or
/// (1,S,1,1) broadcast across the batch.
template <typename T>
Var<T> op_weighted_mix(Tape<T>& tp, const std::vector<Var<T>>& experts, Var<T> w) {
  if (experts.empty()) throw ConfigError("weighted_mix: no experts");
  const Shape es = tp.value(experts[0]).shape;
  for (Var<T> e : experts) check_same_shape(tp.value(e), tp.value(experts[0]), "weighted_mix");
  const Tensor<T>& wv = tp.value(w);
  const std::int64_t S = static_cast<std::int64_t>(experts.size());
  if (wv.shape.c != S || wv.shape.h != 1 || wv.shape.w != 1 ||
      (wv.shape.n != es.n && wv.shape.n != 1))
    throw ConfigError("weighted_mix: weight shape " + wv.shape.str() +
                      " incompatible with " + std::to_string(S) + " experts");
  const bool bcast = wv.shape.n == 1;
  const std::int64_t CHW = es.c * es.h * es.w;
  Tensor<T> y(es);
  std::vector<std::int32_t> parents;
  for (std::int64_t s = 0; s < S; ++s) {
    const Tensor<T>& ev = tp.value(experts[s]);
    for (std::int64_t n = 0; n < es.n; ++n) {
      const T ws = wv.at(bcast ? 0 : n, s, 0, 0);
      const T* ep = ev.data.data() + n * CHW;
      T* yp = y.data.data() + n * CHW;
      for (std::int64_t i = 0; i < CHW; ++i) yp[i] += ws * ep[i];
    }
    parents.push_back(experts[s].id);
  }
  parents.push_back(w.id);
  return tp.emit(
      OpKind::kWeightedMix, std::move(y), std::move(parents),
      [bcast, CHW, S](Tape<T>& t, std::int32_t id) {
        const auto& ps = t.parents(id);
        const Tensor<T>& dy = t.grad_buffer(id);
        const Tensor<T>& wvv = t.value_of(ps.back());
        Tensor<T>& dw = t.grad_buffer(ps.back());
        const std::int64_t N = dy.shape.n;
        for (std::int64_t s = 0; s < S; ++s) {
          const Tensor<T>& ev = t.value_of(ps[s]);
          Tensor<T>& de = t.grad_buffer(ps[s]);
          for (std::int64_t n = 0; n < N; ++n) {
            const T ws = wvv.at(bcast ? 0 : n, s, 0, 0);
            const T* dyp = dy.data.data() + n * CHW;
            const T* ep = ev.data.data() + n * CHW;
            T* dep = de.data.data() + n * CHW;
            double acc = 0.0;
            for (std::int64_t i = 0; i < CHW; ++i) {
              dep[i] += ws * dyp[i];
              acc += static_cast<double>(dyp[i]) * static_cast<double>(ep[i]);
            }
            dw.at(bcast ? 0 : n, s, 0, 0) += static_cast<T>(acc);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// loss building blocks

/// Fixed 3x3 high-pass stencil (0 1 0 / 1 -4 1 / 0 1 0) with reflect padding.
template <typename T>
Var<T> op_laplacian(Tape<T>& tp, Var<T> x) {
  const Tensor<T>& xv = tp.value(x);
  const Shape s = xv.shape;
  static const std::int64_t off_h[5] = {-1, 0, 0, 0, 1};
  static const std::int64_t off_w[5] = {0, -1, 0, 1, 0};
  static const double coef[5] = {1.0, 1.0, -4.0, 1.0, 1.0};
  Tensor<T> y(s);
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c) {
      const T* xp = xv.plane(n, c);
      T* yp = y.plane(n, c);
      for (std::int64_t h = 0; h < s.h; ++h)
        for (std::int64_t w = 0; w < s.w; ++w) {
          double acc = 0.0;
          for (int k = 0; k < 5; ++k) {
            std::int64_t ih = reflect_index(h + off_h[k], s.h);
            std::int64_t iw = reflect_index(w + off_w[k], s.w);
            acc += coef[k] * static_cast<double>(xp[ih * s.w + iw]);
          }
          yp[h * s.w + w] = static_cast<T>(acc);
        }
    }
  return tp.emit(OpKind::kLaplacian, std::move(y), {x.id},
                 [](Tape<T>& t, std::int32_t id) {
                   const Tensor<T>& dy = t.grad_buffer(id);
                   Tensor<T>& dx = t.grad_buffer(t.parents(id)[0]);
                   const Shape s = dy.shape;
                   static const std::int64_t off_h[5] = {-1, 0, 0, 0, 1};
                   static const std::int64_t off_w[5] = {0, -1, 0, 1, 0};
                   static const double coef[5] = {1.0, 1.0, -4.0, 1.0, 1.0};
                   for (std::int64_t n = 0; n < s.n; ++n)
                     for (std::int64_t c = 0; c < s.c; ++c) {
                       const T* dyp = dy.plane(n, c);
                       T* dxp = dx.plane(n, c);
                       for (std::int64_t h = 0; h < s.h; ++h)
                         for (std::int64_t w = 0; w < s.w; ++w) {
                           const double g = static_cast<double>(dyp[h * s.w + w]);
                           for (int k = 0; k < 5; ++k) {
                             std::int64_t ih = reflect_index(h + off_h[k], s.h);
                             std::int64_t iw = reflect_index(w + off_w[k], s.w);
                             dxp[ih * s.w + iw] += static_cast<T>(coef[k] * g);
                           }
                         }
                     }
                 });
}

enum class SpectrumNorm {
  kUnnormalized,  // plain DFT, sum of magnitudes
  kOrthonormal,   // DFT / sqrt(HW), mean of magnitudes
};

/// Scalar sum (or mean) of 2-D DFT magnitudes of every (n,c) plane.
/// Magnitudes below 1e-30 contribute zero gradient.
template <typename T>
Var<T> op_spectrum_abs_sum(Tape<T>& tp, Var<T> x,
                           SpectrumNorm norm = SpectrumNorm::kUnnormalized) {
  const Tensor<T>& xv = tp.value(x);
  const Shape s = xv.shape;
  const std::int64_t HW = s.h * s.w;
  DftTable th(s.h), tw(s.w);
  const double post =
      norm == SpectrumNorm::kOrthonormal
          ? 1.0 / (std::sqrt(static_cast<double>(HW)) * static_cast<double>(s.numel()))
          : 1.0;
  // Unit-phase planes are cached for the backward sweep.
  auto sign_re = std::make_shared<std::vector<double>>(s.numel());
  auto sign_im = std::make_shared<std::vector<double>>(s.numel());
  double total = 0.0;
  std::vector<double> fre, fim;
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c) {
      dft2d_plane(xv.plane(n, c), s.h, s.w, th, tw, fre, fim);
      double* sr = sign_re->data() + (n * s.c + c) * HW;
      double* si = sign_im->data() + (n * s.c + c) * HW;
      for (std::int64_t i = 0; i < HW; ++i) {
        double mag = std::hypot(fre[i], fim[i]);
        total += mag;
        if (mag < 1e-30) {
          sr[i] = si[i] = 0.0;
        } else {
          sr[i] = fre[i] / mag;
          si[i] = fim[i] / mag;
        }
      }
    }
  Tensor<T> y(Shape{1, 1, 1, 1});
  y.data[0] = static_cast<T>(total * post);
  return tp.emit(
      OpKind::kSpectrumAbsSum, std::move(y), {x.id},
      [sign_re, sign_im, s, HW, post](Tape<T>& t, std::int32_t id) {
        const double g = static_cast<double>(t.grad_buffer(id).data[0]) * post;
        Tensor<T>& dx = t.grad_buffer(t.parents(id)[0]);
        DftTable th(s.h), tw(s.w);
        std::vector<double> adj;
        std::vector<double> plane_re(HW), plane_im(HW);
        for (std::int64_t n = 0; n < s.n; ++n)
          for (std::int64_t c = 0; c < s.c; ++c) {
            const double* sr = sign_re->data() + (n * s.c + c) * HW;
            const double* si = sign_im->data() + (n * s.c + c) * HW;
            plane_re.assign(sr, sr + HW);
            plane_im.assign(si, si + HW);
            dft2d_abs_adjoint(plane_re, plane_im, s.h, s.w, th, tw, adj);
            T* dxp = dx.plane(n, c);
            for (std::int64_t i = 0; i < HW; ++i)
              dxp[i] += static_cast<T>(g * adj[i]);
          }
      });
}

/// Scalar sum of squares.
template <typename T>
Var<T> op_sum_squares(Tape<T>& tp, Var<T> x) {
  const Tensor<T>& xv = tp.value(x);
  double acc = 0.0;
  for (T v : xv.data) acc += static_cast<double>(v) * static_cast<double>(v);
  Tensor<T> y(Shape{1, 1, 1, 1});
  y.data[0] = static_cast<T>(acc);
  return tp.emit(OpKind::kSumSquares, std::move(y), {x.id},
                 [](Tape<T>& t, std::int32_t id) {
                   const T g = t.grad_buffer(id).data[0];
                   const Tensor<T>& xvv = t.value_of(t.parents(id)[0]);
                   Tensor<T>& dx = t.grad_buffer(t.parents(id)[0]);
                   for (std::size_t i = 0; i < dx.data.size(); ++i)
                     dx.data[i] += T(2) * g * xvv.data[i];
                 });
}

/// Scalar sum of all elements.
template <typename T>
Var<T> op_sum(Tape<T>& tp, Var<T> x) {
  const Tensor<T>& xv = tp.value(x);
  double acc = 0.0;
  for (T v : xv.data) acc += static_cast<double>(v);
  Tensor<T> y(Shape{1, 1, 1, 1});
  y.data[0] = static_cast<T>(acc);
  return tp.emit(OpKind::kSum, std::move(y), {x.id},
                 [](Tape<T>& t, std::int32_t id) {
                   const T g = t.grad_buffer(id).data[0];
                   Tensor<T>& dx = t.grad_buffer(t.parents(id)[0]);
                   for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += g;
                 });
}

/// y = sqrt(x + c) elementwise (used with scalar x and c = eps^2).
template <typename T>
Var<T> op_sqrt_shift(Tape<T>& tp, Var<T> x, double c) {
  const Tensor<T>& xv = tp.value(x);
  Tensor<T> y(xv.shape);
  for (std::size_t i = 0; i < y.data.size(); ++i)
    y.data[i] = static_cast<T>(std::sqrt(static_cast<double>(xv.data[i]) + c));
  return tp.emit(OpKind::kSqrtShift, std::move(y), {x.id},
                 [](Tape<T>& t, std::int32_t id) {
                   const Tensor<T>& dy = t.grad_buffer(id);
                   const Tensor<T>& yv = t.value_of(id);
                   Tensor<T>& dx = t.grad_buffer(t.parents(id)[0]);
                   for (std::size_t i = 0; i < dx.data.size(); ++i)
                     dx.data[i] += static_cast<T>(
                         static_cast<double>(dy.data[i]) /
                         (2.0 * static_cast<double>(yv.data[i])));
                 });
}

// ---------------------------------------------------------------------------
// pointwise nonlinearities (not used by the filtering blocks; present for the
// frozen feature extractor and as foils for structural tests)

template <typename T>
Var<T> op_relu(Tape<T>& tp, Var<T> x) {
  const Tensor<T>& xv = tp.value(x);
  Tensor<T> y(xv.shape);
  for (std::size_t i = 0; i < y.data.size(); ++i)
    y.data[i] = xv.data[i] > T(0) ? xv.data[i] : T(0);
  return tp.emit(OpKind::kRelu, std::move(y), {x.id},
                 [](Tape<T>& t, std::int32_t id) {
                   const Tensor<T>& dy = t.grad_buffer(id);
                   const Tensor<T>& xvv = t.value_of(t.parents(id)[0]);
                   Tensor<T>& dx = t.grad_buffer(t.parents(id)[0]);
                   for (std::size_t i = 0; i < dx.data.size(); ++i)
                     if (xvv.data[i] > T(0)) dx.data[i] += dy.data[i];
                 });
}

template <typename T>
Var<T> op_sigmoid(Tape<T>& tp, Var<T> x) {
  const Tensor<T>& xv = tp.value(x);
  Tensor<T> y(xv.shape);
  for (std::size_t i = 0; i < y.data.size(); ++i)
    y.data[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(xv.data[i]))));
  return tp.emit(OpKind::kSigmoid, std::move(y), {x.id},
                 [](Tape<T>& t, std::int32_t id) {
                   const Tensor<T>& dy = t.grad_buffer(id);
                   const Tensor<T>& yv = t.value_of(id);
                   Tensor<T>& dx = t.grad_buffer(t.parents(id)[0]);
                   for (std::size_t i = 0; i < dx.data.size(); ++i)
                     dx.data[i] += dy.data[i] * yv.data[i] * (T(1) - yv.data[i]);
                 });
}

template <typename T>
Var<T> op_tanh(Tape<T>& tp, Var<T> x) {
  const Tensor<T>& xv = tp.value(x);
  Tensor<T> y(xv.shape);
  for (std::size_t i = 0; i < y.data.size(); ++i)
    y.data[i] = static_cast<T>(std::tanh(static_cast<double>(xv.data[i])));
  return tp.emit(OpKind::kTanh, std::move(y), {x.id},
                 [](Tape<T>& t, std::int32_t id) {
                   const Tensor<T>& dy = t.grad_buffer(id);
                   const Tensor<T>& yv = t.value_of(id);
                   Tensor<T>& dx = t.grad_buffer(t.parents(id)[0]);
                   for (std::size_t i = 0; i < dx.data.size(); ++i)
                     dx.data[i] += dy.data[i] * (T(1) - yv.data[i] * yv.data[i]);
                 });
}

}  // namespace dhnet
