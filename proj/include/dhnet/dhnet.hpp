// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dhnet/ddre.hpp"
#include "dhnet/volterra.hpp"

namespace dhnet {

/// Architecture hyper-parameters. Nine stages: 1-4 encoder (shallow to deep),
/// 5 middle, 6-9 decoder (deep to shallow); widths C, 2C, 4C, 8C, 8C, 8C,
/// 4C, 2C, C with three stride-2 transitions each way.
struct NetworkConfig {
  std::int64_t width = 8;
  std::array<std::int64_t, 9> blocks{1, 1, 1, 1, 1, 1, 1, 1, 1};
  std::int64_t q = 4;
  std::int64_t s = 5;
  std::int64_t t = 4;
  std::int64_t scales = 4;
  std::int64_t expand = 2;
  bool ddre = true;
  RouterMode router = RouterMode::kInputConditioned;
  PriorVariant prior = PriorVariant::kNone;
  std::int64_t prior_channels = 4;
  std::uint64_t prior_seed = 1;
  std::string prior_path;
  std::string precision = "float";

  void validate() const {
    if (width < 1) throw ConfigError("config: width must be positive");
    for (std::int64_t b : blocks)
      if (b < 0) throw ConfigError("config: block counts must be non-negative");
    if (q < 0) throw ConfigError("config: q must be non-negative");
    if (s < 1 || 2 * s - 1 > 9) throw ConfigError("config: s must be in [1, 5]");
    if (t < 1) throw ConfigError("config: t must be at least 1");
    if (scales != 4) throw ConfigError("config: only scales=4 is supported");
    if (expand < 1) throw ConfigError("config: expand must be at least 1");
    if (prior_channels < 1) throw ConfigError("config: prior_channels must be positive");
    if (precision != "float" && precision != "double")
      throw ConfigError("config: precision must be float or double");
    if (prior == PriorVariant::kExternal && prior_path.empty())
      throw ConfigError("config: external prior requires prior_path");
  }

  /// Downsampling depth of stage i (0-based): 0,1,2,3,3,3,2,1,0.
  static std::int64_t stage_level(std::int64_t i) {
    static constexpr std::int64_t lvl[9] = {0, 1, 2, 3, 3, 3, 2, 1, 0};
    return lvl[i];
  }
  std::int64_t stage_width(std::int64_t i) const { return width << stage_level(i); }
};

template <typename T>
struct StageParams {
  std::vector<VBlockParams<T>> blocks;
  std::optional<DDREParams<T>> ddre;
};

template <typename T>
struct DHNetParams {
  NetworkConfig cfg;
  ConvParams<T> intro;                  // 3 -> C, 3×3
  std::array<StageParams<T>, 9> stages;
  std::array<ConvParams<T>, 3> downs;   // stride-2 3×3, C -> 2C
  std::array<ConvParams<T>, 3> ups;     // 1×1 C -> 2C + pixel shuffle
  ConvParams<T> outro;                  // C -> 3, 3×3
  PriorProvider<T> provider;            // frozen; not a trainable parameter
};

template <typename T, typename Fn>
void visit_params(StageParams<T>& st, const std::string& prefix, Fn&& fn) {
  for (std::size_t j = 0; j < st.blocks.size(); ++j)
    visit_params(st.blocks[j], prefix + ".block" + std::to_string(j), fn);
  if (st.ddre) visit_params(*st.ddre, prefix + ".ddre", fn);
}

template <typename T, typename Fn>
void visit_params(DHNetParams<T>& net, Fn&& fn) {
  visit_params(net.intro, "intro", fn);
  for (std::size_t i = 0; i < 9; ++i)
    visit_params(net.stages[i], "stage" + std::to_string(i + 1), fn);
  for (std::size_t i = 0; i < 3; ++i)
    visit_params(net.downs[i], "down" + std::to_string(i + 1), fn);
  for (std::size_t i = 0; i < 3; ++i)
    visit_params(net.ups[i], "up" + std::to_string(i + 1), fn);
  visit_params(net.outro, "outro", fn);
}

/// Builds and initializes the whole parameter record. The prior provider is
/// seeded from cfg.prior_seed; an external prior map must be attached by the
/// caller afterwards.
template <typename T>
DHNetParams<T> make_dhnet(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  DHNetParams<T> net;
  net.cfg = cfg;
  const std::int64_t c0 = cfg.width;
  net.intro = make_conv<T>(3, c0, 3);
  net.outro = make_conv<T>(c0, 3, 3);
  for (std::int64_t i = 0; i < 9; ++i) {
    const std::int64_t ci = cfg.stage_width(i);
    auto& st = net.stages[i];
    for (std::int64_t j = 0; j < cfg.blocks[i]; ++j)
      st.blocks.push_back(make_vblock<T>(ci, cfg.q, cfg.expand));
    if (cfg.ddre)
      st.ddre = make_ddre<T>(ci, cfg.prior_channels, cfg.s, cfg.t, cfg.router);
  }
  for (std::int64_t i = 0; i < 3; ++i) {
    const std::int64_t ci = c0 << i;
    net.downs[i] = make_conv<T>(ci, 2 * ci, 3, 2);
    net.ups[i] = make_conv<T>(cfg.stage_width(5 + i), 2 * cfg.stage_width(5 + i), 1);
  }
  visit_params(net, [&](const std::string& n, Param<T>& p) {
    default_init_param(n, p, seed);
  });
  // The closing projection starts at zero, so a fresh network is exactly the
  // identity map: restoration quality begins at the degraded input instead of
  // random-init noise, and every training step competes with that baseline.
  std::fill(net.outro.weight.value.data.begin(), net.outro.weight.value.data.end(),
            T(0));
  net.provider = make_prior_provider<T>(cfg.prior, cfg.prior_channels, cfg.prior_seed);
  return net;
}

/// One DHBlock: a chain of VBlocks followed by the degradation module.
/// `prior` must already be at the stage's spatial size.
template <typename T>
Var<T> dhblock_forward(Tape<T>& tp, Var<T> x, StageParams<T>& st,
                       const Tensor<T>& prior) {
  for (auto& b : st.blocks) x = vblock_forward(tp, x, b);
  if (st.ddre) x = ddre_forward(tp, x, prior, *st.ddre);
  return x;
}

struct DHNetTrace {
  std::vector<std::pair<std::string, Shape>> stages;
};

/// Full restoration network: encoder, middle, decoder with additive skips,
/// and a residual image prediction added back onto the input.
template <typename T>
Var<T> dhnet_forward(Tape<T>& tp, Var<T> image, DHNetParams<T>& net,
                     DHNetTrace* trace = nullptr) {
  const Shape in = tp.shape(image);
  if (in.c != 3) throw ConfigError("dhnet_forward: expected a 3-channel image");
  if (in.h % 8 != 0 || in.w % 8 != 0)
    throw ConfigError("dhnet_forward: spatial size must be divisible by 8");

  Tensor<T> prior_full;
  if (net.cfg.ddre) prior_full = prior_features(net.provider, tp.value(image));
  auto stage = [&](int idx, Var<T> x) {
    auto& st = net.stages[idx];
    Tensor<T> prior;
    if (st.ddre) {
      const Shape& fs = tp.shape(x);
      prior = resample_prior(prior_full, fs.h, fs.w);
    }
    Var<T> y = dhblock_forward(tp, x, st, prior);
    if (trace) trace->stages.emplace_back("stage" + std::to_string(idx + 1), tp.shape(y));
    return y;
  };

  Var<T> x = apply_conv(tp, image, net.intro);
  Var<T> e1 = stage(0, x);
  Var<T> e2 = stage(1, apply_conv(tp, e1, net.downs[0]));
  Var<T> e3 = stage(2, apply_conv(tp, e2, net.downs[1]));
  Var<T> e4 = stage(3, apply_conv(tp, e3, net.downs[2]));
  Var<T> mid = stage(4, e4);
  Var<T> d6 = stage(5, op_add(tp, mid, e4));
  x = op_pixel_shuffle(tp, apply_conv(tp, d6, net.ups[0]), 2);
  Var<T> d7 = stage(6, op_add(tp, x, e3));
  x = op_pixel_shuffle(tp, apply_conv(tp, d7, net.ups[1]), 2);
  Var<T> d8 = stage(7, op_add(tp, x, e2));
  x = op_pixel_shuffle(tp, apply_conv(tp, d8, net.ups[2]), 2);
  Var<T> d9 = stage(8, op_add(tp, x, e1));
  Var<T> resid = apply_conv(tp, d9, net.outro);
  return op_add(tp, resid, image);
}

/// Inference entry point: reflect-pads H and W up to the next multiple of 8,
/// runs the network off-graph, and crops back to the original size.
template <typename T>
Tensor<T> dhnet_infer(const Tensor<T>& image, DHNetParams<T>& net) {
  const Shape& s = image.shape;
  const std::int64_t ph = (8 - s.h % 8) % 8, pw = (8 - s.w % 8) % 8;
  Tensor<T> padded = image;
  if (ph != 0 || pw != 0) {
    padded = Tensor<T>(Shape{s.n, s.c, s.h + ph, s.w + pw});
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t c = 0; c < s.c; ++c)
        for (std::int64_t h = 0; h < s.h + ph; ++h)
          for (std::int64_t w = 0; w < s.w + pw; ++w)
            padded.at(n, c, h, w) =
                image.at(n, c, reflect_index(h, s.h), reflect_index(w, s.w));
  }
  Tape<T> tp;
  Tensor<T> out = tp.value(dhnet_forward(tp, tp.constant(padded), net));
  if (ph == 0 && pw == 0) return out;
  Tensor<T> cropped(s);
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c)
      for (std::int64_t h = 0; h < s.h; ++h)
        for (std::int64_t w = 0; w < s.w; ++w)
          cropped.at(n, c, h, w) = out.at(n, c, h, w);
  return cropped;
}

// ---------------------------------------------------------------------------
// Parameter and MAC accounting
// ---------------------------------------------------------------------------

struct ModuleCost {
  std::string name;
  std::int64_t params = 0;
  std::int64_t macs = 0;
};

struct ComplexityReport {
  std::int64_t total_params = 0;
  std::int64_t total_macs = 0;
  std::vector<ModuleCost> modules;

  std::string str() const {
    std::ostringstream os;
    os << "module params macs\n";
    for (const auto& m : modules)
      os << m.name << ' ' << m.params << ' ' << m.macs << '\n';
    os << "total " << total_params << ' ' << total_macs << '\n';
    return os.str();
  }
};

namespace detail {

struct Cost {
  std::int64_t params = 0, macs = 0;
  Cost& operator+=(const Cost& o) {
    params += o.params;
    macs += o.macs;
    return *this;
  }
};

/// MACs for a conv are out·(in/groups)·k²·H'·W'; params include the bias.
inline Cost conv_cost(std::int64_t in, std::int64_t out, std::int64_t k,
                      std::int64_t groups, std::int64_t oh, std::int64_t ow,
                      bool bias = true) {
  Cost c;
  c.params = out * (in / groups) * k * k + (bias ? out : 0);
  c.macs = out * (in / groups) * k * k * oh * ow;
  return c;
}

inline Cost vblock_cost(std::int64_t c, std::int64_t q, std::int64_t expand,
                        std::int64_t h, std::int64_t w) {
  const std::int64_t ec = c * expand, hw = h * w;
  Cost t;
  t.params += 2 * c;                       // layer norm gamma, beta
  t.macs += 2 * c * hw;                    // normalize + scale per element
  t += conv_cost(c, ec, 1, 1, h, w);       // expansion
  t += conv_cost(ec, ec, 3, ec, h, w);     // depthwise mixing
  t += conv_cost(ec, ec, 3, ec, h, w);     // first-order kernel
  for (std::int64_t i = 0; i < q; ++i) {
    t += conv_cost(ec, ec, 3, ec, h, w);   // pair factor a
    t += conv_cost(ec, ec, 3, ec, h, w);   // pair factor b
    t.macs += ec * hw;                     // elementwise product
  }
  t += conv_cost(ec, ec, 1, 1, 1, 1);      // channel gate (on pooled 1×1)
  t.macs += ec * hw;                       // gating product
  t += conv_cost(ec, c, 1, 1, h, w);       // contraction
  return t;
}

inline Cost ddre_cost(std::int64_t c, std::int64_t cp, std::int64_t s,
                      std::int64_t t, RouterMode mode, std::int64_t h,
                      std::int64_t w) {
  const std::int64_t hw = h * w;
  Cost r;
  r += conv_cost(c + cp, c, 1, 1, h, w);   // prior injection
  for (std::int64_t i = 1; i <= s; ++i) {
    const std::int64_t k = 2 * i - 1;
    r += conv_cost(c, c, k, c, h, w);      // depthwise
    r += conv_cost(c, c, 1, 1, h, w);      // pointwise
  }
  for (std::int64_t i = 0; i < t; ++i) {
    if (mode == RouterMode::kStatic)
      r.params += s;
    else
      r += conv_cost(c, s, 1, 1, 1, 1);    // linear on pooled features
    r.macs += s * c * hw;                  // weighted mixture
  }
  r += conv_cost(t * c, c, 1, 1, h, w);    // output projection
  return r;
}

}  // namespace detail

/// Analytic parameter/MAC totals for a single sample at the given resolution.
/// Counts trainable parameters only; the frozen prior provider is excluded.
inline ComplexityReport count_params_macs(const NetworkConfig& cfg, std::int64_t h,
                                          std::int64_t w) {
  cfg.validate();
  if (h % 8 != 0 || w % 8 != 0)
    throw ConfigError("count_params_macs: resolution must be divisible by 8");
  ComplexityReport rep;
  auto push = [&](const std::string& name, detail::Cost c) {
    rep.modules.push_back({name, c.params, c.macs});
    rep.total_params += c.params;
    rep.total_macs += c.macs;
  };
  push("intro", detail::conv_cost(3, cfg.width, 3, 1, h, w));
  for (std::int64_t i = 0; i < 9; ++i) {
    const std::int64_t lvl = NetworkConfig::stage_level(i);
    const std::int64_t ci = cfg.stage_width(i);
    const std::int64_t sh = h >> lvl, sw = w >> lvl;
    detail::Cost c;
    for (std::int64_t j = 0; j < cfg.blocks[i]; ++j)
      c += detail::vblock_cost(ci, cfg.q, cfg.expand, sh, sw);
    if (cfg.ddre)
      c += detail::ddre_cost(ci, cfg.prior_channels, cfg.s, cfg.t, cfg.router, sh, sw);
    push("stage" + std::to_string(i + 1), c);
  }
  for (std::int64_t i = 0; i < 3; ++i) {
    const std::int64_t ci = cfg.width << i;
    push("down" + std::to_string(i + 1),
         detail::conv_cost(ci, 2 * ci, 3, 1, h >> (i + 1), w >> (i + 1)));
    const std::int64_t cu = cfg.stage_width(5 + i);
    push("up" + std::to_string(i + 1),
         detail::conv_cost(cu, 2 * cu, 1, 1, h >> (3 - i), w >> (3 - i)));
  }
  push("outro", detail::conv_cost(cfg.width, 3, 3, 1, h, w));
  return rep;
}

/// Radius (in input pixels) of the output's dependence cone, accumulated
/// along the deepest path; parallel branches contribute their maximum.
inline std::int64_t receptive_field_radius(const NetworkConfig& cfg) {
  cfg.validate();
  std::int64_t r = 1;  // intro 3×3
  auto stage_r = [&](std::int64_t i, std::int64_t stride) {
    std::int64_t acc = cfg.blocks[i] * 2 * stride;  // depthwise + first-order 3×3
    if (cfg.ddre) acc += (cfg.s - 1) * stride;      // widest expert kernel
    return acc;
  };
  const std::int64_t strides[9] = {1, 2, 4, 8, 8, 8, 4, 2, 1};
  for (std::int64_t i = 0; i < 9; ++i) r += stage_r(i, strides[i]);
  r += 1 + 2 + 4;  // three stride-2 3×3 downsample convs
  r += 1;          // outro 3×3
  if (cfg.ddre && cfg.prior == PriorVariant::kFrozenModel) r += 2;
  return r;
}

}  // namespace dhnet
