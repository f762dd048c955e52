// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "dhnet/errors.hpp"
#include "dhnet/rng.hpp"

namespace dhnet {

/// Logical NCHW shape.  All tensors in the library are rank-4; vectors and
/// scalars use degenerate dimensions (e.g. a scalar is 1x1x1x1).
struct Shape {
  std::int64_t n = 0, c = 0, h = 0, w = 0;

  std::int64_t numel() const { return n * c * h * w; }

  bool operator==(const Shape& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << n << "x" << c << "x" << h << "x" << w;
    return os.str();
  }
};

/// Dense NCHW tensor with contiguous row-major storage.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(s), data(static_cast<std::size_t>(s.numel()), T(0)) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
      throw ConfigError("negative tensor dimension: " + s.str());
  }

  static Tensor zeros(Shape s) { return Tensor(s); }

  static Tensor full(Shape s, T v) {
    Tensor t(s);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  std::int64_t numel() const { return shape.numel(); }

  std::int64_t index(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return ((n * shape.c + c) * shape.h + h) * shape.w + w;
  }

  T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data[static_cast<std::size_t>(index(n, c, h, w))];
  }
  T at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data[static_cast<std::size_t>(index(n, c, h, w))];
  }

  /// Pointer to the contiguous HxW plane of sample n, channel c.
  T* plane(std::int64_t n, std::int64_t c) {
    return data.data() + index(n, c, 0, 0);
  }
  const T* plane(std::int64_t n, std::int64_t c) const {
    return data.data() + index(n, c, 0, 0);
  }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  void fill_uniform(Rng& rng, double lo, double hi) {
    for (T& v : data) v = static_cast<T>(rng.uniform(lo, hi));
  }
  void fill_normal(Rng& rng, double mean, double stddev) {
    for (T& v : data) v = static_cast<T>(mean + stddev * rng.normal());
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& src) {
  Tensor<To> dst(src.shape);
  for (std::size_t i = 0; i < src.data.size(); ++i)
    dst.data[i] = static_cast<To>(src.data[i]);
  return dst;
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape != b.shape)
    throw ConfigError(std::string(what) + ": shape mismatch " + a.shape.str() +
                      " vs " + b.shape.str());
}

template <typename T>
double max_abs(const Tensor<T>& t) {
  double m = 0.0;
  for (T v : t.data) m = std::max(m, std::abs(static_cast<double>(v)));
  return m;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
  return m;
}

/// dst += s * src
template <typename T>
void add_scaled(Tensor<T>& dst, const Tensor<T>& src, T s) {
  check_same_shape(dst, src, "add_scaled");
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += s * src.data[i];
}

/// Mean over the spatial window mapped to each output cell; the windows tile
/// the input exactly (floor/ceil split), so any output size is valid.
template <typename T>
Tensor<T> adaptive_avg_pool(const Tensor<T>& x, std::int64_t out_h, std::int64_t out_w) {
  if (out_h <= 0 || out_w <= 0)
    throw ConfigError("adaptive_avg_pool: non-positive output size");
  Tensor<T> y(Shape{x.shape.n, x.shape.c, out_h, out_w});
  for (std::int64_t n = 0; n < x.shape.n; ++n)
    for (std::int64_t c = 0; c < x.shape.c; ++c)
      for (std::int64_t oh = 0; oh < out_h; ++oh) {
        std::int64_t h0 = (oh * x.shape.h) / out_h;
        std::int64_t h1 = ((oh + 1) * x.shape.h + out_h - 1) / out_h;
        for (std::int64_t ow = 0; ow < out_w; ++ow) {
          std::int64_t w0 = (ow * x.shape.w) / out_w;
          std::int64_t w1 = ((ow + 1) * x.shape.w + out_w - 1) / out_w;
          double acc = 0.0;
          for (std::int64_t h = h0; h < h1; ++h)
            for (std::int64_t w = w0; w < w1; ++w)
              acc += static_cast<double>(x.at(n, c, h, w));
          y.at(n, c, oh, ow) =
              static_cast<T>(acc / static_cast<double>((h1 - h0) * (w1 - w0)));
        }
      }
  return y;
}

/// Mirror an index into [0, n) without repeating the border sample
/// (…, 2, 1, 0 | 0', 1', … maps -1 -> 1, n -> n-2).
inline std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  std::int64_t period = 2 * (n - 1);
  i = i % period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace dhnet
