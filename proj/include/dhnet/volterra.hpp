// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dhnet/conv.hpp"
#include "dhnet/ops.hpp"
#include "dhnet/tape.hpp"

namespace dhnet {

/// Rank-Q separable realization of a second-order spatial Volterra filter:
/// a linear depthwise kernel plus Q pairs of depthwise kernels whose
/// responses are multiplied elementwise.
template <typename T>
struct VolterraSecondOrderParams {
  struct KernelPair {
    ConvParams<T> a;
    ConvParams<T> b;
  };
  ConvParams<T> first_order;
  std::vector<KernelPair> pairs;  // Q entries

  std::int64_t rank() const { return static_cast<std::int64_t>(pairs.size()); }
};

/// Depthwise kernels of size (2 p1 + 1) x (2 p2 + 1), spatial-size-preserving.
/// Q = 0 is legal and degenerates to the linear term alone.
template <typename T>
VolterraSecondOrderParams<T> make_volterra_second_order(std::int64_t channels,
                                                       std::int64_t q,
                                                       std::int64_t p1 = 1,
                                                       std::int64_t p2 = 1,
                                                       bool with_bias = true) {
  if (channels < 1 || q < 0 || p1 < 0 || p2 < 0)
    throw ConfigError("volterra: bad geometry");
  VolterraSecondOrderParams<T> vp;
  vp.first_order = make_conv_rect<T>(channels, channels, 2 * p1 + 1, 2 * p2 + 1, 1,
                                     channels, with_bias);
  for (std::int64_t i = 0; i < q; ++i) {
    typename VolterraSecondOrderParams<T>::KernelPair pair;
    pair.a = make_conv_rect<T>(channels, channels, 2 * p1 + 1, 2 * p2 + 1, 1, channels,
                               with_bias);
    pair.b = make_conv_rect<T>(channels, channels, 2 * p1 + 1, 2 * p2 + 1, 1, channels,
                               with_bias);
    vp.pairs.push_back(std::move(pair));
  }
  return vp;
}

template <typename T, typename Fn>
void visit_params(VolterraSecondOrderParams<T>& p, const std::string& prefix, Fn&& fn) {
  visit_params(p.first_order, prefix + ".first_order", fn);
  for (std::size_t i = 0; i < p.pairs.size(); ++i) {
    visit_params(p.pairs[i].a, prefix + ".pair" + std::to_string(i) + ".a", fn);
    visit_params(p.pairs[i].b, prefix + ".pair" + std::to_string(i) + ".b", fn);
  }
}

/// X1 + X2 = conv(F1; W1) + sum_q conv(F1; W2aq) * conv(F1; W2bq).
template <typename T>
Var<T> volterra_second_order(Tape<T>& tp, Var<T> f1,
                             const VolterraSecondOrderParams<T>& params) {
  Var<T> y = apply_conv(tp, f1, params.first_order);
  for (const auto& pair : params.pairs) {
    Var<T> prod =
        op_mul(tp, apply_conv(tp, f1, pair.a), apply_conv(tp, f1, pair.b));
    y = op_add(tp, y, prod);
  }
  return y;
}

/// The Volterra block.  Internally widens the channel count by `expand`
/// (pre_point: C -> E*C; out_point: E*C -> C) so the quadratic interactions
/// happen in a wider space, mirroring the expansion the baseline restoration
/// blocks use.
template <typename T>
struct VBlockParams {
  LayerNormParams<T> ln;
  ConvParams<T> pre_point;                // 1x1, C -> E*C
  ConvParams<T> pre_depth;                // 3x3 depthwise at E*C
  VolterraSecondOrderParams<T> volterra;  // at E*C
  ConvParams<T> ca_gate;                  // 1x1 on pooled features, E*C -> E*C
  ConvParams<T> out_point;                // 1x1, E*C -> C
};

template <typename T>
VBlockParams<T> make_vblock(std::int64_t c, std::int64_t q, std::int64_t expand = 2) {
  if (c < 1 || q < 0 || expand < 1) throw ConfigError("vblock: bad geometry");
  const std::int64_t ec = c * expand;
  VBlockParams<T> p;
  p.ln = LayerNormParams<T>(c);
  p.pre_point = make_conv<T>(c, ec, 1);
  p.pre_depth = make_conv<T>(ec, ec, 3, 1, ec);
  p.volterra = make_volterra_second_order<T>(ec, q);
  p.ca_gate = make_conv<T>(ec, ec, 1);
  p.out_point = make_conv<T>(ec, c, 1);
  return p;
}

template <typename T, typename Fn>
void visit_params(VBlockParams<T>& p, const std::string& prefix, Fn&& fn) {
  visit_params(p.ln, prefix + ".ln", fn);
  visit_params(p.pre_point, prefix + ".pre_point", fn);
  visit_params(p.pre_depth, prefix + ".pre_depth", fn);
  visit_params(p.volterra, prefix + ".volterra", fn);
  visit_params(p.ca_gate, prefix + ".ca_gate", fn);
  visit_params(p.out_point, prefix + ".out_point", fn);
}

/// F1 = depthwise(pointwise(LN(F)));  F2 = second-order Volterra of F1;
/// F3 = out_point(F2 * gate(GAP(F2))) + F.  No pointwise nonlinearity
/// appears anywhere in this graph.
template <typename T>
Var<T> vblock_forward(Tape<T>& tp, Var<T> f, const VBlockParams<T>& params) {
  Var<T> ln = apply_layer_norm(tp, f, params.ln);
  Var<T> f1 = apply_conv(tp, apply_conv(tp, ln, params.pre_point), params.pre_depth);
  Var<T> f2 = volterra_second_order(tp, f1, params.volterra);
  Var<T> gate = apply_conv(tp, op_global_avg_pool(tp, f2), params.ca_gate);
  Var<T> gated = op_scale_channels(tp, f2, gate);
  Var<T> out = apply_conv(tp, gated, params.out_point);
  return op_add(tp, out, f);
}

}  // namespace dhnet
