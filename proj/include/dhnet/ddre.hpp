// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dhnet/conv.hpp"
#include "dhnet/ops.hpp"
#include "dhnet/params.hpp"
#include "dhnet/tensor.hpp"

namespace dhnet {

/// Depthwise-separable expert: k×k depthwise followed by a 1×1 pointwise.
/// Expert index s (1-based) carries kernel size k = 2s - 1.
template <typename T>
struct ExpertParams {
  std::int64_t k = 1;
  ConvParams<T> depthwise;
  ConvParams<T> pointwise;
};

template <typename T>
ExpertParams<T> make_expert(std::int64_t channels, std::int64_t k) {
  if (k < 1 || k > 9 || k % 2 == 0)
    throw ConfigError("make_expert: kernel size must be odd and in [1, 9]");
  ExpertParams<T> e;
  e.k = k;
  e.depthwise = make_conv<T>(channels, channels, k, 1, channels);
  e.pointwise = make_conv<T>(channels, channels, 1);
  return e;
}

template <typename T, typename Fn>
void visit_params(ExpertParams<T>& e, const std::string& prefix, Fn&& fn) {
  visit_params(e.depthwise, prefix + ".dw", fn);
  visit_params(e.pointwise, prefix + ".pw", fn);
}

enum class RouterMode { kStatic, kInputConditioned };

inline RouterMode router_mode_from_string(const std::string& s) {
  if (s == "static") return RouterMode::kStatic;
  if (s == "input_conditioned") return RouterMode::kInputConditioned;
  throw ConfigError("unknown router mode: " + s);
}

inline std::string router_mode_name(RouterMode m) {
  return m == RouterMode::kStatic ? "static" : "input_conditioned";
}

/// Assigns a normalized weight per expert. Static mode holds S raw scores;
/// input-conditioned mode maps pooled features through a linear layer. Both
/// finish with a softmax so the weights sum to 1 per router (per sample).
template <typename T>
struct RouterParams {
  RouterMode mode = RouterMode::kInputConditioned;
  Param<T> logits;        // static: (1, S, 1, 1)
  ConvParams<T> linear;   // input_conditioned: 1×1, C -> S, with bias
};

template <typename T>
RouterParams<T> make_router(std::int64_t channels, std::int64_t experts,
                            RouterMode mode) {
  if (experts < 1) throw ConfigError("make_router: need at least one expert");
  RouterParams<T> r;
  r.mode = mode;
  if (mode == RouterMode::kStatic) {
    r.logits = Param<T>(Shape{1, experts, 1, 1});
  } else {
    r.linear = make_conv<T>(channels, experts, 1);
  }
  return r;
}

template <typename T, typename Fn>
void visit_params(RouterParams<T>& r, const std::string& prefix, Fn&& fn) {
  if (r.mode == RouterMode::kStatic)
    fn(prefix + ".logits", r.logits);
  else
    visit_params(r.linear, prefix + ".linear", fn);
}

template <typename T>
struct DDREParams {
  ConvParams<T> prior_proj;             // 1×1, C + C_p -> C
  std::vector<ExpertParams<T>> experts;  // S experts, k = 1, 3, 5, ...
  std::vector<RouterParams<T>> routers;  // T routers
  ConvParams<T> out_proj;               // 1×1, T·C -> C
};

template <typename T>
DDREParams<T> make_ddre(std::int64_t channels, std::int64_t prior_channels,
                        std::int64_t s, std::int64_t t,
                        RouterMode mode = RouterMode::kInputConditioned) {
  if (s < 1 || t < 1) throw ConfigError("make_ddre: S and T must be at least 1");
  if (2 * s - 1 > 9) throw ConfigError("make_ddre: at most 5 experts (kernel <= 9)");
  if (prior_channels < 1) throw ConfigError("make_ddre: prior channels must be positive");
  DDREParams<T> p;
  p.prior_proj = make_conv<T>(channels + prior_channels, channels, 1);
  for (std::int64_t i = 1; i <= s; ++i)
    p.experts.push_back(make_expert<T>(channels, 2 * i - 1));
  for (std::int64_t i = 0; i < t; ++i)
    p.routers.push_back(make_router<T>(channels, s, mode));
  p.out_proj = make_conv<T>(t * channels, channels, 1);
  return p;
}

template <typename T, typename Fn>
void visit_params(DDREParams<T>& p, const std::string& prefix, Fn&& fn) {
  visit_params(p.prior_proj, prefix + ".prior_proj", fn);
  for (std::size_t i = 0; i < p.experts.size(); ++i)
    visit_params(p.experts[i], prefix + ".expert" + std::to_string(i), fn);
  for (std::size_t i = 0; i < p.routers.size(); ++i)
    visit_params(p.routers[i], prefix + ".router" + std::to_string(i), fn);
  visit_params(p.out_proj, prefix + ".out_proj", fn);
}

// ---------------------------------------------------------------------------
// Prior providers
// ---------------------------------------------------------------------------

enum class PriorVariant { kNone, kFrozenModel, kExternal };

inline PriorVariant prior_variant_from_string(const std::string& s) {
  if (s == "none") return PriorVariant::kNone;
  if (s == "frozen_model") return PriorVariant::kFrozenModel;
  if (s == "external") return PriorVariant::kExternal;
  throw ConfigError("unknown prior variant: " + s);
}

inline std::string prior_variant_name(PriorVariant v) {
  switch (v) {
    case PriorVariant::kNone: return "none";
    case PriorVariant::kFrozenModel: return "frozen_model";
    default: return "external";
  }
}

/// Source of the degradation prior P. Its parameters are frozen: they are
/// never exposed to trainable-parameter visitors and features enter the graph
/// as constants, so no gradient can reach them.
template <typename T>
struct PriorProvider {
  PriorVariant variant = PriorVariant::kNone;
  std::int64_t channels = 1;  // C_p
  // frozen_model: tiny fixed CNN over the RGB input
  ConvParams<T> fm_conv1;  // 3 -> C_p, 3×3
  ConvParams<T> fm_conv2;  // C_p -> C_p, 3×3
  // external: a feature map loaded from a file
  Tensor<T> external;
};

template <typename T>
PriorProvider<T> make_prior_provider(PriorVariant variant, std::int64_t channels,
                                     std::uint64_t seed = 0) {
  if (channels < 1) throw ConfigError("prior provider: channels must be positive");
  PriorProvider<T> p;
  p.variant = variant;
  p.channels = channels;
  if (variant == PriorVariant::kFrozenModel) {
    p.fm_conv1 = make_conv<T>(3, channels, 3);
    p.fm_conv2 = make_conv<T>(channels, channels, 3);
    visit_params(p.fm_conv1, "provider.conv1",
                 [&](const std::string& n, Param<T>& q) { default_init_param(n, q, seed); });
    visit_params(p.fm_conv2, "provider.conv2",
                 [&](const std::string& n, Param<T>& q) { default_init_param(n, q, seed); });
  }
  return p;
}

/// Full-resolution prior features for an RGB input batch. Pure function of
/// (provider, image); never touches a tape.
template <typename T>
Tensor<T> prior_features(const PriorProvider<T>& p, const Tensor<T>& image) {
  const Shape& s = image.shape;
  switch (p.variant) {
    case PriorVariant::kNone:
      return Tensor<T>::zeros(Shape{s.n, p.channels, s.h, s.w});
    case PriorVariant::kFrozenModel: {
      if (s.c != 3) throw ConfigError("frozen prior expects a 3-channel input");
      Tensor<T> h1 = conv2d_eval(image, p.fm_conv1);
      for (T& v : h1.data) v = T(1) / (T(1) + std::exp(-v));
      return conv2d_eval(h1, p.fm_conv2);
    }
    default: {
      if (p.external.shape.numel() == 0)
        throw ConfigError("external prior requested but no feature map is loaded");
      if (p.external.shape.c != p.channels)
        throw ConfigError("external prior has wrong channel count");
      Tensor<T> r = adaptive_avg_pool(p.external, s.h, s.w);
      if (r.shape.n == s.n) return r;
      if (r.shape.n != 1)
        throw ConfigError("external prior batch size must be 1 or match the input");
      Tensor<T> out(Shape{s.n, p.channels, s.h, s.w});
      const std::size_t plane = r.data.size();
      for (std::int64_t n = 0; n < s.n; ++n)
        std::copy(r.data.begin(), r.data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(n * plane));
      return out;
    }
  }
}

/// Average-pool resampling of a prior map to a stage's spatial size.
template <typename T>
Tensor<T> resample_prior(const Tensor<T>& p, std::int64_t h, std::int64_t w) {
  if (p.shape.h == h && p.shape.w == w) return p;
  return adaptive_avg_pool(p, h, w);
}

// ---------------------------------------------------------------------------
// Forward operations
// ---------------------------------------------------------------------------

/// F5 = prior_proj([F4, P]); P enters as a constant (frozen provider).
template <typename T>
Var<T> inject_prior(Tape<T>& tp, Var<T> f4, const Tensor<T>& prior,
                    ConvParams<T>& prior_proj) {
  const Shape& fs = tp.shape(f4);
  if (prior.shape.n != fs.n || prior.shape.h != fs.h || prior.shape.w != fs.w)
    throw ConfigError("inject_prior: prior not aligned with features");
  Var<T> cat = op_concat_channels(tp, {f4, tp.constant(prior)});
  return apply_conv(tp, cat, prior_proj);
}

/// Normalized expert weights for one router: (1,S,1,1) in static mode,
/// (N,S,1,1) when conditioned on the pooled features.
template <typename T>
Var<T> router_weights(Tape<T>& tp, Var<T> f5, RouterParams<T>& r) {
  if (r.mode == RouterMode::kStatic)
    return op_softmax_channels(tp, tp.param(r.logits));
  Var<T> pooled = op_global_avg_pool(tp, f5);
  return op_softmax_channels(tp, apply_conv(tp, pooled, r.linear));
}

/// Full module: inject prior, evaluate each expert once, mix per router with
/// softmax weights, concatenate router outputs, project, and add back F4.
/// Every routing path contributes; there is no top-k selection.
template <typename T>
Var<T> ddre_forward(Tape<T>& tp, Var<T> f4, const Tensor<T>& prior,
                    DDREParams<T>& params) {
  Var<T> f5 = inject_prior(tp, f4, prior, params.prior_proj);
  std::vector<Var<T>> experts;
  experts.reserve(params.experts.size());
  for (auto& e : params.experts)
    experts.push_back(apply_conv(tp, apply_conv(tp, f5, e.depthwise), e.pointwise));
  std::vector<Var<T>> mixed;
  mixed.reserve(params.routers.size());
  for (auto& r : params.routers)
    mixed.push_back(op_weighted_mix(tp, experts, router_weights(tp, f5, r)));
  Var<T> f6 = mixed.size() == 1 ? mixed[0] : op_concat_channels(tp, mixed);
  Var<T> f7 = apply_conv(tp, f6, params.out_proj);
  return op_add(tp, f7, f4);
}

}  // namespace dhnet
