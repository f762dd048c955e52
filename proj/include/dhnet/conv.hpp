// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <type_traits>

#include "dhnet/errors.hpp"
#include "dhnet/tensor.hpp"
#include "dhnet/tape.hpp"

namespace dhnet {

/// Zero-padded cross-correlation spec.  Weight layout is
/// (out_ch, in_ch/groups, kh, kw); bias is (out_ch, 1, 1, 1).
struct ConvSpec {
  std::int64_t stride = 1;
  std::int64_t pad_h = 0;
  std::int64_t pad_w = 0;
  std::int64_t groups = 1;
};

namespace detail {

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  return a >= 0 ? a / b : -((-a + b - 1) / b);
}
inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) {
  return a > 0 ? (a + b - 1) / b : -(-a / b);
}

/// Output range [lo, hi] for which in = out*stride - pad + k stays inside
/// [0, in_size).  hi < lo means the tap never lands in-bounds.
inline void valid_out_range(std::int64_t k, std::int64_t pad, std::int64_t stride,
                            std::int64_t in_size, std::int64_t out_size,
                            std::int64_t& lo, std::int64_t& hi) {
  lo = std::max<std::int64_t>(0, ceil_div(pad - k, stride));
  hi = std::min<std::int64_t>(out_size - 1, floor_div(in_size - 1 + pad - k, stride));
}

}  // namespace detail

inline std::int64_t conv_out_size(std::int64_t in, std::int64_t k, std::int64_t pad,
                                  std::int64_t stride) {
  return (in + 2 * pad - k) / stride + 1;
}

inline void conv2d_check(const Shape& x, const Shape& w, const Shape* bias,
                         const ConvSpec& spec) {
  if (spec.stride < 1 || spec.groups < 1)
    throw ConfigError("conv2d: stride and groups must be >= 1");
  if (spec.pad_h < 0 || spec.pad_w < 0) throw ConfigError("conv2d: negative padding");
  if (x.c % spec.groups != 0 || w.n % spec.groups != 0)
    throw ConfigError("conv2d: channels not divisible by groups");
  if (w.c != x.c / spec.groups)
    throw ConfigError("conv2d: weight expects " + std::to_string(w.c) +
                      " in-channels per group, input has " +
                      std::to_string(x.c / spec.groups));
  if (x.h + 2 * spec.pad_h < w.h || x.w + 2 * spec.pad_w < w.w)
    throw ConfigError("conv2d: kernel larger than padded input");
  if (bias != nullptr && bias->n != w.n)
    throw ConfigError("conv2d: bias size does not match out-channels");
}

/// y = conv(x, w) + bias.  Inner loops run over contiguous output spans so
/// the compiler can vectorize the multiply-accumulate.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w,
                         std::type_identity_t<const Tensor<T>*> bias,
                         const ConvSpec& spec) {
  conv2d_check(x.shape, w.shape, bias != nullptr ? &bias->shape : nullptr, spec);
  const std::int64_t N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
  const std::int64_t OC = w.shape.n, ICg = w.shape.c, KH = w.shape.h, KW = w.shape.w;
  const std::int64_t OH = conv_out_size(H, KH, spec.pad_h, spec.stride);
  const std::int64_t OW = conv_out_size(W, KW, spec.pad_w, spec.stride);
  const std::int64_t OCg = OC / spec.groups;
  Tensor<T> y(Shape{N, OC, OH, OW});

  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t g = 0; g < spec.groups; ++g) {
      for (std::int64_t ocl = 0; ocl < OCg; ++ocl) {
        const std::int64_t oc = g * OCg + ocl;
        T* yp = y.plane(n, oc);
        if (bias != nullptr) {
          const T b = bias->data[static_cast<std::size_t>(oc)];
          for (std::int64_t i = 0; i < OH * OW; ++i) yp[i] = b;
        }
        for (std::int64_t icl = 0; icl < ICg; ++icl) {
          const std::int64_t ic = g * ICg + icl;
          const T* xp = x.plane(n, ic);
          const T* wp = w.plane(oc, icl);
          for (std::int64_t kh = 0; kh < KH; ++kh) {
            std::int64_t oh_lo, oh_hi;
            detail::valid_out_range(kh, spec.pad_h, spec.stride, H, OH, oh_lo, oh_hi);
            for (std::int64_t kw = 0; kw < KW; ++kw) {
              const T wv = wp[kh * KW + kw];
              if (wv == T(0) && KH * KW > 1) continue;
              std::int64_t ow_lo, ow_hi;
              detail::valid_out_range(kw, spec.pad_w, spec.stride, W, OW, ow_lo, ow_hi);
              for (std::int64_t oh = oh_lo; oh <= oh_hi; ++oh) {
                const std::int64_t ih = oh * spec.stride - spec.pad_h + kh;
                T* yrow = yp + oh * OW;
                const T* xrow = xp + ih * W - spec.pad_w + kw;
                if (spec.stride == 1) {
                  for (std::int64_t ow = ow_lo; ow <= ow_hi; ++ow)
                    yrow[ow] += wv * xrow[ow];
                } else {
                  for (std::int64_t ow = ow_lo; ow <= ow_hi; ++ow)
                    yrow[ow] += wv * xrow[ow * spec.stride];
                }
              }
            }
          }
        }
      }
    }
  }
  return y;
}

/// Gradients of conv2d.  Any of dx/dw/db may be null to skip that output.
/// dx/dw/db are overwritten, not accumulated into.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const ConvSpec& spec,
                     const Tensor<T>& dy, std::type_identity_t<Tensor<T>*> dx,
                     std::type_identity_t<Tensor<T>*> dw,
                     std::type_identity_t<Tensor<T>*> db) {
  conv2d_check(x.shape, w.shape, nullptr, spec);
  const std::int64_t N = x.shape.n, H = x.shape.h, W = x.shape.w;
  const std::int64_t OC = w.shape.n, ICg = w.shape.c, KH = w.shape.h, KW = w.shape.w;
  const std::int64_t OH = conv_out_size(H, KH, spec.pad_h, spec.stride);
  const std::int64_t OW = conv_out_size(W, KW, spec.pad_w, spec.stride);
  const std::int64_t OCg = OC / spec.groups;
  if (dy.shape != Shape{N, OC, OH, OW})
    throw ConfigError("conv2d_backward: dy shape " + dy.shape.str() + " does not match");

  if (dx != nullptr) *dx = Tensor<T>(x.shape);
  if (dw != nullptr) *dw = Tensor<T>(w.shape);
  if (db != nullptr) {
    *db = Tensor<T>(Shape{OC, 1, 1, 1});
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t oc = 0; oc < OC; ++oc) {
        const T* dyp = dy.plane(n, oc);
        T acc = T(0);
        for (std::int64_t i = 0; i < OH * OW; ++i) acc += dyp[i];
        db->data[static_cast<std::size_t>(oc)] += acc;
      }
  }
  if (dx == nullptr && dw == nullptr) return;

  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t g = 0; g < spec.groups; ++g) {
      for (std::int64_t ocl = 0; ocl < OCg; ++ocl) {
        const std::int64_t oc = g * OCg + ocl;
        const T* dyp = dy.plane(n, oc);
        for (std::int64_t icl = 0; icl < ICg; ++icl) {
          const std::int64_t ic = g * ICg + icl;
          const T* xp = x.plane(n, ic);
          const T* wp = w.plane(oc, icl);
          T* dxp = dx != nullptr ? dx->plane(n, ic) : nullptr;
          T* dwp = dw != nullptr ? dw->plane(oc, icl) : nullptr;
          for (std::int64_t kh = 0; kh < KH; ++kh) {
            std::int64_t oh_lo, oh_hi;
            detail::valid_out_range(kh, spec.pad_h, spec.stride, H, OH, oh_lo, oh_hi);
            for (std::int64_t kw = 0; kw < KW; ++kw) {
              std::int64_t ow_lo, ow_hi;
              detail::valid_out_range(kw, spec.pad_w, spec.stride, W, OW, ow_lo, ow_hi);
              const T wv = wp[kh * KW + kw];
              T wacc = T(0);
              for (std::int64_t oh = oh_lo; oh <= oh_hi; ++oh) {
                const std::int64_t ih = oh * spec.stride - spec.pad_h + kh;
                const T* dyrow = dyp + oh * OW;
                const T* xrow = xp + ih * W - spec.pad_w + kw;
                T* dxrow = dxp != nullptr ? dxp + ih * W - spec.pad_w + kw : nullptr;
                if (spec.stride == 1) {
                  if (dwp != nullptr)
                    for (std::int64_t ow = ow_lo; ow <= ow_hi; ++ow)
                      wacc += dyrow[ow] * xrow[ow];
                  if (dxp != nullptr)
                    for (std::int64_t ow = ow_lo; ow <= ow_hi; ++ow)
                      dxrow[ow] += wv * dyrow[ow];
                } else {
                  if (dwp != nullptr)
                    for (std::int64_t ow = ow_lo; ow <= ow_hi; ++ow)
                      wacc += dyrow[ow] * xrow[ow * spec.stride];
                  if (dxp != nullptr)
                    for (std::int64_t ow = ow_lo; ow <= ow_hi; ++ow)
                      dxrow[ow * spec.stride] += wv * dyrow[ow];
                }
              }
              if (dwp != nullptr) dwp[kh * KW + kw] += wacc;
            }
          }
        }
      }
    }
  }
}

/// A convolution layer's learnables plus its geometry.
template <typename T>
struct ConvParams {
  Param<T> weight;
  std::optional<Param<T>> bias;
  ConvSpec spec;
};

/// Rectangular-kernel constructor; pad defaults to "same" for stride 1.
template <typename T>
ConvParams<T> make_conv_rect(std::int64_t in_ch, std::int64_t out_ch, std::int64_t k_h,
                             std::int64_t k_w, std::int64_t stride = 1,
                             std::int64_t groups = 1, bool with_bias = true,
                             std::int64_t pad_h = -1, std::int64_t pad_w = -1) {
  if (in_ch < 1 || out_ch < 1 || k_h < 1 || k_w < 1)
    throw ConfigError("make_conv: bad geometry");
  if (in_ch % groups != 0 || out_ch % groups != 0)
    throw ConfigError("make_conv: channels not divisible by groups");
  ConvParams<T> p;
  p.weight = Param<T>(Shape{out_ch, in_ch / groups, k_h, k_w});
  if (with_bias) p.bias = Param<T>(Shape{out_ch, 1, 1, 1});
  p.spec.stride = stride;
  p.spec.groups = groups;
  p.spec.pad_h = pad_h < 0 ? k_h / 2 : pad_h;
  p.spec.pad_w = pad_w < 0 ? k_w / 2 : pad_w;
  return p;
}

/// Convenience constructor: square kernel, "same" padding by default.
template <typename T>
ConvParams<T> make_conv(std::int64_t in_ch, std::int64_t out_ch, std::int64_t k,
                        std::int64_t stride = 1, std::int64_t groups = 1,
                        bool with_bias = true, std::int64_t pad = -1) {
  return make_conv_rect<T>(in_ch, out_ch, k, k, stride, groups, with_bias, pad, pad);
}

template <typename T, typename Fn>
void visit_params(ConvParams<T>& p, const std::string& prefix, Fn&& fn) {
  fn(prefix + ".weight", p.weight);
  if (p.bias) fn(prefix + ".bias", *p.bias);
}

template <typename T>
Tensor<T> conv2d_eval(const Tensor<T>& x, const ConvParams<T>& p) {
  return conv2d_forward(x, p.weight.value, p.bias ? &p.bias->value : nullptr, p.spec);
}

}  // namespace dhnet
