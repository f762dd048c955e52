// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dhnet/errors.hpp"
#include "dhnet/params.hpp"
#include "dhnet/rng.hpp"
#include "dhnet/tensor.hpp"

namespace dhnet {

constexpr std::int64_t kMaxBlurLength = 31;

/// One cell of the degradation grid: a linear motion kernel of the given
/// support length at the given angle.  length == 1 is the identity.
struct RegionBlur {
  std::int64_t length = 1;
  double angle = 0.0;
};

/// Spatially-varying degradation: a rows x cols grid of motion kernels with
/// linear cross-fades of width `band` across region boundaries.
struct BlurSpec {
  std::int64_t rows = 1;
  std::int64_t cols = 1;
  std::int64_t band = 0;
  std::vector<RegionBlur> regions;  // row-major, rows*cols entries

  void validate() const {
    if (rows < 1 || cols < 1) throw ConfigError("blur grid must be at least 1x1");
    if (band < 0) throw ConfigError("blend band must be non-negative");
    if (static_cast<std::int64_t>(regions.size()) != rows * cols) {
      throw ConfigError("blur spec has " + std::to_string(regions.size()) +
                        " regions, expected " + std::to_string(rows * cols));
    }
    for (const RegionBlur& r : regions) {
      if (r.length < 1 || r.length > kMaxBlurLength) {
        throw ConfigError("blur length " + std::to_string(r.length) +
                          " outside [1, " + std::to_string(kMaxBlurLength) + "]");
      }
      if (!(r.angle >= 0.0 && r.angle < 3.14159265358979323847)) {
        throw ConfigError("blur angle must lie in [0, pi)");
      }
    }
  }

  /// Draws lengths uniformly from [min_length, max_length] and angles from
  /// [0, pi).
  static BlurSpec random(std::int64_t rows, std::int64_t cols, std::int64_t band,
                         std::int64_t min_length, std::int64_t max_length,
                         std::uint64_t seed) {
    if (min_length < 1 || max_length > kMaxBlurLength || min_length > max_length) {
      throw ConfigError("blur length range [" + std::to_string(min_length) + ", " +
                        std::to_string(max_length) + "] invalid");
    }
    BlurSpec s;
    s.rows = rows;
    s.cols = cols;
    s.band = band;
    Rng rng(seed);
    for (std::int64_t i = 0; i < rows * cols; ++i) {
      RegionBlur r;
      r.length = min_length + static_cast<std::int64_t>(rng.uniform_index(
                                  static_cast<std::uint64_t>(max_length - min_length + 1)));
      r.angle = rng.uniform(0.0, 3.141592653589793);
      s.regions.push_back(r);
    }
    return s;
  }

  /// Row-major "length@angle" list; the per-image ground-truth degradation
  /// record stored alongside the pair in the dataset manifest.
  std::string label() const {
    std::ostringstream os;
    os.precision(9);
    for (std::size_t i = 0; i < regions.size(); ++i) {
      if (i != 0) os << ';';
      os << regions[i].length << '@' << regions[i].angle;
    }
    return os.str();
  }

  std::uint64_t hash() const {
    std::ostringstream os;
    os << rows << 'x' << cols << '/' << band << '/' << label();
    return fnv1a(os.str());
  }
};

/// Linear motion kernel: `length` unit impulses splatted bilinearly along a
/// line through the center at `angle`, normalized to sum 1.  Returned as
/// (1,1,k,k) with odd k; length 1 yields the 1x1 identity.
inline Tensor<double> motion_kernel(std::int64_t length, double angle) {
  if (length < 1 || length > kMaxBlurLength) {
    throw ConfigError("blur length outside [1, " + std::to_string(kMaxBlurLength) + "]");
  }
  const std::int64_t k = (length % 2 == 1) ? length : length + 1;
  Tensor<double> ker = Tensor<double>::zeros(Shape{1, 1, k, k});
  const std::int64_t c = k / 2;
  const double dx = std::cos(angle);
  const double dy = std::sin(angle);
  for (std::int64_t i = 0; i < length; ++i) {
    const double t = static_cast<double>(i) - static_cast<double>(length - 1) / 2.0;
    const double px = static_cast<double>(c) + t * dx;
    const double py = static_cast<double>(c) + t * dy;
    const std::int64_t x0 = static_cast<std::int64_t>(std::floor(px));
    const std::int64_t y0 = static_cast<std::int64_t>(std::floor(py));
    const double fx = px - static_cast<double>(x0);
    const double fy = py - static_cast<double>(y0);
    const double w00 = (1.0 - fx) * (1.0 - fy);
    const double w10 = fx * (1.0 - fy);
    const double w01 = (1.0 - fx) * fy;
    const double w11 = fx * fy;
    ker.at(0, 0, y0, x0) += w00;
    if (w10 != 0.0) ker.at(0, 0, y0, x0 + 1) += w10;
    if (w01 != 0.0) ker.at(0, 0, y0 + 1, x0) += w01;
    if (w11 != 0.0) ker.at(0, 0, y0 + 1, x0 + 1) += w11;
  }
  double total = 0.0;
  for (double v : ker.data) total += v;
  for (double& v : ker.data) v /= total;
  return ker;
}

namespace detail {

/// Same-size correlation of every plane of `x` with one 2D kernel, border
/// handled by reflect padding.  The identity kernel short-circuits to a copy.
inline Tensor<double> blur_plane_reflect(const Tensor<double>& x,
                                         const Tensor<double>& ker) {
  if (ker.shape.h == 1 && ker.shape.w == 1 && ker.at(0, 0, 0, 0) == 1.0) return x;
  const std::int64_t kh = ker.shape.h;
  const std::int64_t kw = ker.shape.w;
  const std::int64_t rh = kh / 2;
  const std::int64_t rw = kw / 2;
  Tensor<double> out(x.shape);
  for (std::int64_t n = 0; n < x.shape.n; ++n) {
    for (std::int64_t c = 0; c < x.shape.c; ++c) {
      for (std::int64_t y = 0; y < x.shape.h; ++y) {
        for (std::int64_t xx = 0; xx < x.shape.w; ++xx) {
          double acc = 0.0;
          for (std::int64_t u = 0; u < kh; ++u) {
            const std::int64_t sy = reflect_index(y + u - rh, x.shape.h);
            for (std::int64_t v = 0; v < kw; ++v) {
              const std::int64_t sx = reflect_index(xx + v - rw, x.shape.w);
              acc += ker.at(0, 0, u, v) * x.at(n, c, sy, sx);
            }
          }
          out.at(n, c, y, xx) = acc;
        }
      }
    }
  }
  return out;
}

/// Per-coordinate region membership along one axis: for each position, the
/// owning region index plus an optional cross-fade partner and its weight.
struct AxisBlend {
  std::vector<std::int64_t> region;   // lower-index contributing region
  std::vector<double> partner_w;      // weight of region+1 (0 outside bands)
};

inline AxisBlend axis_blend(std::int64_t extent, std::int64_t parts,
                            std::int64_t band) {
  AxisBlend ab;
  ab.region.resize(static_cast<std::size_t>(extent));
  ab.partner_w.assign(static_cast<std::size_t>(extent), 0.0);
  std::vector<std::int64_t> bounds(static_cast<std::size_t>(parts) + 1);
  for (std::int64_t i = 0; i <= parts; ++i) bounds[static_cast<std::size_t>(i)] = i * extent / parts;
  const double half = static_cast<double>(band) / 2.0;
  for (std::int64_t p = 0; p < extent; ++p) {
    std::int64_t r = 0;
    while (r + 1 < parts && p >= bounds[static_cast<std::size_t>(r + 1)]) ++r;
    ab.region[static_cast<std::size_t>(p)] = r;
    if (band > 0) {
      // Cross-fade around the nearest interior boundary, if p falls inside
      // its band.  Bands never overlap because band <= min region extent.
      for (std::int64_t b = 1; b < parts; ++b) {
        const double center = static_cast<double>(bounds[static_cast<std::size_t>(b)]);
        const double lo = center - half;
        const double hi = center + half;
        const double pos = static_cast<double>(p);
        if (pos >= lo && pos < hi) {
          const double alpha = (pos - lo + 0.5) / static_cast<double>(band);
          ab.region[static_cast<std::size_t>(p)] = b - 1;
          ab.partner_w[static_cast<std::size_t>(p)] = alpha;
          break;
        }
      }
    }
  }
  return ab;
}

}  // namespace detail

/// Applies the spatially-varying degradation of `spec` to a sharp image in
/// [0,1].  Each region's kernel is applied over the whole frame with reflect
/// padding; outputs are cross-faded linearly inside the seam bands and the
/// result is clamped to [0,1].  Positions where all contributing regions
/// agree bitwise are copied, so an all-identity spec reproduces the input
/// exactly.
inline Tensor<double> synth_blur(const Tensor<double>& sharp, const BlurSpec& spec) {
  spec.validate();
  const std::int64_t h = sharp.shape.h;
  const std::int64_t w = sharp.shape.w;
  const std::int64_t min_rh = h / spec.rows;
  const std::int64_t min_cw = w / spec.cols;
  if (min_rh < 1 || min_cw < 1) throw ConfigError("blur grid finer than the image");
  if (spec.band > std::min(min_rh, min_cw)) {
    throw ConfigError("blend band " + std::to_string(spec.band) +
                      " exceeds the smallest region extent");
  }
  // Every kernel must fit inside its region.
  std::map<std::pair<std::int64_t, double>, Tensor<double>> kernels;
  for (const RegionBlur& r : spec.regions) {
    const auto key = std::make_pair(r.length, r.angle);
    if (kernels.find(key) == kernels.end()) kernels.emplace(key, motion_kernel(r.length, r.angle));
    const Tensor<double>& ker = kernels.at(key);
    if (ker.shape.h > min_rh || ker.shape.w > min_cw) {
      throw ConfigError("blur kernel " + std::to_string(ker.shape.h) + "x" +
                        std::to_string(ker.shape.w) + " exceeds region " +
                        std::to_string(min_rh) + "x" + std::to_string(min_cw));
    }
  }

  // One full-frame blur per distinct kernel, shared across regions.
  std::map<std::pair<std::int64_t, double>, Tensor<double>> blurred;
  for (const auto& [key, ker] : kernels) {
    blurred.emplace(key, detail::blur_plane_reflect(sharp, ker));
  }
  auto region_result = [&](std::int64_t ri, std::int64_t ci) -> const Tensor<double>& {
    const RegionBlur& r = spec.regions[static_cast<std::size_t>(ri * spec.cols + ci)];
    return blurred.at(std::make_pair(r.length, r.angle));
  };

  const detail::AxisBlend rowb = detail::axis_blend(h, spec.rows, spec.band);
  const detail::AxisBlend colb = detail::axis_blend(w, spec.cols, spec.band);

  Tensor<double> out(sharp.shape);
  for (std::int64_t n = 0; n < sharp.shape.n; ++n) {
    for (std::int64_t c = 0; c < sharp.shape.c; ++c) {
      for (std::int64_t y = 0; y < h; ++y) {
        const std::int64_t r0 = rowb.region[static_cast<std::size_t>(y)];
        const double ra = rowb.partner_w[static_cast<std::size_t>(y)];
        for (std::int64_t x = 0; x < w; ++x) {
          const std::int64_t c0 = colb.region[static_cast<std::size_t>(x)];
          const double ca = colb.partner_w[static_cast<std::size_t>(x)];
          double vals[4];
          double wts[4];
          int cnt = 0;
          const double rw[2] = {1.0 - ra, ra};
          const double cw[2] = {1.0 - ca, ca};
          for (int dr = 0; dr < 2; ++dr) {
            if (rw[dr] == 0.0) continue;
            for (int dc = 0; dc < 2; ++dc) {
              if (cw[dc] == 0.0) continue;
              vals[cnt] = region_result(r0 + dr, c0 + dc).at(n, c, y, x);
              wts[cnt] = rw[dr] * cw[dc];
              ++cnt;
            }
          }
          bool all_same = true;
          for (int i = 1; i < cnt; ++i) all_same = all_same && vals[i] == vals[0];
          if (all_same) {
            out.at(n, c, y, x) = vals[0];
          } else {
            double acc = 0.0;
            for (int i = 0; i < cnt; ++i) acc += wts[i] * vals[i];
            out.at(n, c, y, x) = std::clamp(acc, 0.0, 1.0);
          }
        }
      }
    }
  }
  return out;
}

}  // namespace dhnet
