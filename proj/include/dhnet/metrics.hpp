// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "dhnet/errors.hpp"
#include "dhnet/tensor.hpp"

namespace dhnet {

inline constexpr double kPsnrCap = 100.0;

/// 10·log10(peak² / MSE) over every element, capped at 100 dB.
template <typename T>
double psnr(const Tensor<T>& pred, const Tensor<T>& target, double peak = 1.0) {
  check_same_shape(pred, target, "psnr");
  double mse = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(pred.data.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

namespace detail {

inline const std::vector<double>& ssim_window() {
  static const std::vector<double> w = [] {
    std::vector<double> k(11);
    const double sigma = 1.5;
    double sum = 0.0;
    for (int i = 0; i < 11; ++i)
      sum += (k[i] = std::exp(-(i - 5) * (i - 5) / (2.0 * sigma * sigma)));
    for (double& v : k) v /= sum;
    return k;
  }();
  return w;
}

/// Valid-mode separable Gaussian blur of an H×W plane (row-major doubles).
inline std::vector<double> ssim_blur(const std::vector<double>& img, std::int64_t h,
                                     std::int64_t w) {
  const auto& k = ssim_window();
  const std::int64_t vw = w - 10, vh = h - 10;
  std::vector<double> horiz(static_cast<std::size_t>(h * vw));
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < vw; ++x) {
      double acc = 0.0;
      for (int i = 0; i < 11; ++i) acc += k[i] * img[y * w + x + i];
      horiz[y * vw + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(vh * vw));
  for (std::int64_t y = 0; y < vh; ++y)
    for (std::int64_t x = 0; x < vw; ++x) {
      double acc = 0.0;
      for (int i = 0; i < 11; ++i) acc += k[i] * horiz[(y + i) * vw + x];
      out[y * vw + x] = acc;
    }
  return out;
}

}  // namespace detail

/// Mean local SSIM over valid 11×11 windows (σ=1.5 Gaussian weights) of the
/// channel-mean grayscale images; batch entries are averaged.
template <typename T>
double ssim(const Tensor<T>& pred, const Tensor<T>& target) {
  check_same_shape(pred, target, "ssim");
  const Shape& s = pred.shape;
  if (s.h < 11 || s.w < 11)
    throw ConfigError("ssim: image smaller than the 11×11 window");
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;

  double total = 0.0;
  for (std::int64_t n = 0; n < s.n; ++n) {
    const std::size_t hw = static_cast<std::size_t>(s.h * s.w);
    std::vector<double> gx(hw, 0.0), gy(hw, 0.0);
    for (std::int64_t c = 0; c < s.c; ++c) {
      const T* px = pred.plane(n, c);
      const T* py = target.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) {
        gx[i] += static_cast<double>(px[i]) / s.c;
        gy[i] += static_cast<double>(py[i]) / s.c;
      }
    }
    std::vector<double> xx(hw), yy(hw), xy(hw);
    for (std::size_t i = 0; i < hw; ++i) {
      xx[i] = gx[i] * gx[i];
      yy[i] = gy[i] * gy[i];
      xy[i] = gx[i] * gy[i];
    }
    auto mu_x = detail::ssim_blur(gx, s.h, s.w);
    auto mu_y = detail::ssim_blur(gy, s.h, s.w);
    auto m_xx = detail::ssim_blur(xx, s.h, s.w);
    auto m_yy = detail::ssim_blur(yy, s.h, s.w);
    auto m_xy = detail::ssim_blur(xy, s.h, s.w);
    // The mean products are materialized in a separate pass so the combine
    // loop below holds no mul-feeding-an-add pattern a compiler could fuse
    // into an FMA on one side of the ratio but not the other.  Identical
    // inputs then give bitwise-equal numerator and denominator (the only
    // remaining fusable terms scale by 2.0, which is exact), i.e. exactly 1.
    const std::size_t nw = mu_x.size();
    std::vector<double> pxx(nw), pyy(nw), pxy(nw);
    for (std::size_t i = 0; i < nw; ++i) {
      pxx[i] = mu_x[i] * mu_x[i];
      pyy[i] = mu_y[i] * mu_y[i];
      pxy[i] = mu_x[i] * mu_y[i];
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < nw; ++i) {
      const double vx = m_xx[i] - pxx[i];
      const double vy = m_yy[i] - pyy[i];
      const double cov = m_xy[i] - pxy[i];
      acc += ((2.0 * pxy[i] + c1) * (2.0 * cov + c2)) /
             ((pxx[i] + pyy[i] + c1) * (vx + vy + c2));
    }
    total += acc / static_cast<double>(nw);
  }
  return total / static_cast<double>(s.n);
}

/// Per-image metric lines plus their arithmetic means, in a line-oriented
/// text form that parses back exactly.
struct MetricsReport {
  std::vector<double> psnr_db;
  std::vector<double> ssim_val;

  std::size_t count() const { return psnr_db.size(); }
  double mean_psnr() const {
    double s = 0.0;
    for (double v : psnr_db) s += v;
    return psnr_db.empty() ? 0.0 : s / static_cast<double>(psnr_db.size());
  }
  double mean_ssim() const {
    double s = 0.0;
    for (double v : ssim_val) s += v;
    return ssim_val.empty() ? 0.0 : s / static_cast<double>(ssim_val.size());
  }

  std::string str() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(9);
    os << "images " << count() << '\n';
    for (std::size_t i = 0; i < count(); ++i)
      os << "image " << i << " psnr " << psnr_db[i] << " ssim " << ssim_val[i] << '\n';
    os << "mean psnr " << mean_psnr() << " ssim " << mean_ssim() << '\n';
    return os.str();
  }

  static MetricsReport parse(const std::string& text) {
    MetricsReport r;
    std::istringstream is(text);
    std::string line;
    bool saw_header = false, saw_mean = false;
    std::size_t declared = 0;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string tag;
      ls >> tag;
      if (tag == "images") {
        ls >> declared;
        saw_header = true;
      } else if (tag == "image") {
        std::size_t idx;
        std::string k1, k2;
        double p, s;
        ls >> idx >> k1 >> p >> k2 >> s;
        if (!ls || k1 != "psnr" || k2 != "ssim" || idx != r.psnr_db.size())
          throw IoError("metrics report: malformed image line: " + line);
        r.psnr_db.push_back(p);
        r.ssim_val.push_back(s);
      } else if (tag == "mean") {
        saw_mean = true;
      } else {
        throw IoError("metrics report: unknown line: " + line);
      }
    }
    if (!saw_header || !saw_mean || declared != r.count())
      throw IoError("metrics report: truncated or inconsistent");
    return r;
  }
};

}  // namespace dhnet
