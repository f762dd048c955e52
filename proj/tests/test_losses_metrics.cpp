// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "dhnet/gradcheck.hpp"
#include "dhnet/losses.hpp"
#include "dhnet/metrics.hpp"
#include "oracle_support.hpp"

using namespace dhnet;

namespace {

template <typename Fn>
double eval_loss(const TensorD& a, const TensorD& b, Fn&& term) {
  Tape<double> tp;
  return tp.value(term(tp, tp.constant(a), tp.constant(b))).data[0];
}

double charb_eval(const TensorD& a, const TensorD& b, double eps, LossMode m) {
  return eval_loss(a, b, [&](Tape<double>& tp, Var<double> x, Var<double> y) {
    return charbonnier(tp, x, y, eps, m);
  });
}

/// Independent Laplacian with reflect padding.
TensorD laplacian_oracle(const TensorD& x) {
  TensorD out(x.shape);
  const std::int64_t H = x.shape.h, W = x.shape.w;
  for (std::int64_t n = 0; n < x.shape.n; ++n)
    for (std::int64_t c = 0; c < x.shape.c; ++c)
      for (std::int64_t h = 0; h < H; ++h)
        for (std::int64_t w = 0; w < W; ++w)
          out.at(n, c, h, w) = x.at(n, c, reflect_index(h - 1, H), w) +
                               x.at(n, c, reflect_index(h + 1, H), w) +
                               x.at(n, c, h, reflect_index(w - 1, W)) +
                               x.at(n, c, h, reflect_index(w + 1, W)) -
                               4.0 * x.at(n, c, h, w);
  return out;
}

}  // namespace

TEST_CASE("charbonnier: closed forms and the direct oracle") {
  const double eps = 1e-3;
  TensorD a = oracle::random_tensor<double>(Shape{1, 3, 5, 6}, 1);
  CHECK(charb_eval(a, a, eps, LossMode::kPrinted) == doctest::Approx(eps).epsilon(1e-12));

  TensorD b = a;
  const double e = 0.37;
  b.data[17] += e;
  CHECK(charb_eval(a, b, eps, LossMode::kPrinted) ==
        doctest::Approx(std::sqrt(e * e + eps * eps)).epsilon(1e-12));

  TensorD c = oracle::random_tensor<double>(Shape{2, 3, 4, 4}, 2);
  TensorD d = oracle::random_tensor<double>(Shape{2, 3, 4, 4}, 3);
  double ss = 0.0;
  for (std::size_t i = 0; i < c.data.size(); ++i) {
    const double diff = c.data[i] - d.data[i];
    ss += diff * diff;
  }
  CHECK(charb_eval(c, d, eps, LossMode::kPrinted) ==
        doctest::Approx(std::sqrt(ss + eps * eps)).epsilon(1e-9));
  // symmetry
  CHECK(charb_eval(c, d, eps, LossMode::kPrinted) ==
        doctest::Approx(charb_eval(d, c, eps, LossMode::kPrinted)).epsilon(1e-12));
  // normalized variant divides the squared norm by the element count
  CHECK(charb_eval(c, d, eps, LossMode::kNormalized) ==
        doctest::Approx(std::sqrt(ss / c.data.size() + eps * eps)).epsilon(1e-9));
}

TEST_CASE("charbonnier: normalized mode is replication-invariant, printed mode is not") {
  const double eps = 1e-3;
  TensorD a = oracle::random_tensor<double>(Shape{1, 1, 4, 4}, 4);
  TensorD b = oracle::random_tensor<double>(Shape{1, 1, 4, 4}, 5);
  TensorD a2(Shape{2, 1, 4, 4}), b2(Shape{2, 1, 4, 4});
  for (int n = 0; n < 2; ++n) {
    std::copy(a.data.begin(), a.data.end(), a2.data.begin() + n * a.data.size());
    std::copy(b.data.begin(), b.data.end(), b2.data.begin() + n * b.data.size());
  }
  CHECK(charb_eval(a2, b2, eps, LossMode::kNormalized) ==
        doctest::Approx(charb_eval(a, b, eps, LossMode::kNormalized)).epsilon(1e-12));
  CHECK(charb_eval(a2, b2, eps, LossMode::kPrinted) >
        charb_eval(a, b, eps, LossMode::kPrinted) * 1.3);
}

TEST_CASE("edge_loss: constants are invisible, random pair matches the staged oracle") {
  const double eps = 1e-3;
  auto edge_eval = [&](const TensorD& x, const TensorD& y) {
    return eval_loss(x, y, [&](Tape<double>& tp, Var<double> p, Var<double> t) {
      return edge_loss(tp, p, t, eps);
    });
  };
  TensorD a = oracle::random_tensor<double>(Shape{1, 2, 6, 6}, 6);
  CHECK(edge_eval(a, a) == doctest::Approx(eps).epsilon(1e-12));

  TensorD c1 = Tensor<double>::full(Shape{1, 2, 6, 6}, 0.2);
  TensorD c2 = Tensor<double>::full(Shape{1, 2, 6, 6}, 0.9);
  CHECK(edge_eval(c1, c2) == doctest::Approx(eps).epsilon(1e-12));

  TensorD b = oracle::random_tensor<double>(Shape{1, 2, 6, 6}, 7);
  TensorD la = laplacian_oracle(a), lb = laplacian_oracle(b);
  double ss = 0.0;
  for (std::size_t i = 0; i < la.data.size(); ++i) {
    const double diff = la.data[i] - lb.data[i];
    ss += diff * diff;
  }
  CHECK(edge_eval(a, b) == doctest::Approx(std::sqrt(ss + eps * eps)).epsilon(1e-9));
}

TEST_CASE("frequency_loss: delta spectrum and the brute-force transform oracle") {
  auto freq_eval = [&](const TensorD& x, const TensorD& y, LossMode m) {
    return eval_loss(x, y, [&](Tape<double>& tp, Var<double> p, Var<double> t) {
      return frequency_loss(tp, p, t, m);
    });
  };
  TensorD a = oracle::random_tensor<double>(Shape{1, 2, 5, 4}, 8);
  CHECK(freq_eval(a, a, LossMode::kPrinted) == 0.0);

  // single-pixel difference of amplitude e: flat spectrum, |F| = e everywhere
  const std::int64_t H = 6, W = 7;
  TensorD p = oracle::random_tensor<double>(Shape{1, 1, H, W}, 9);
  TensorD t = p;
  const double e = 0.81;
  t.at(0, 0, 2, 3) -= e;
  CHECK(freq_eval(p, t, LossMode::kPrinted) ==
        doctest::Approx(e * H * W).epsilon(1e-6));

  TensorD x = oracle::random_tensor<double>(Shape{2, 2, 5, 6}, 10);
  TensorD y = oracle::random_tensor<double>(Shape{2, 2, 5, 6}, 11);
  TensorD diff(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) diff.data[i] = x.data[i] - y.data[i];
  const double want = oracle::spectrum_abs_sum_naive(diff);
  CHECK(freq_eval(x, y, LossMode::kPrinted) == doctest::Approx(want).epsilon(1e-6));
  CHECK(freq_eval(x, y, LossMode::kPrinted) ==
        doctest::Approx(freq_eval(y, x, LossMode::kPrinted)).epsilon(1e-12));
  // normalized mode: orthonormal scaling and element-count mean
  const double hw = 5.0 * 6.0, numel = static_cast<double>(x.shape.numel());
  CHECK(freq_eval(x, y, LossMode::kNormalized) ==
        doctest::Approx(want / std::sqrt(hw) / numel).epsilon(1e-6));
}

TEST_CASE("total_loss: weighted composition of the three terms") {
  LossWeights w;
  TensorD a = oracle::random_tensor<double>(Shape{1, 3, 6, 6}, 12);
  TensorD b = oracle::random_tensor<double>(Shape{1, 3, 6, 6}, 13);

  for (LossMode m : {LossMode::kPrinted, LossMode::kNormalized}) {
    const double lc = charb_eval(a, b, w.eps, m);
    const double le = eval_loss(a, b, [&](Tape<double>& tp, Var<double> p, Var<double> t) {
      return edge_loss(tp, p, t, w.eps, m);
    });
    const double lf = eval_loss(a, b, [&](Tape<double>& tp, Var<double> p, Var<double> t) {
      return frequency_loss(tp, p, t, m);
    });
    CHECK(total_loss_eval(a, b, w, m) ==
          doctest::Approx(lc + 0.05 * le + 0.1 * lf).epsilon(1e-9));
    CHECK(lc > 0.0);
    CHECK(le > 0.0);
    CHECK(lf > 0.0);
    CHECK(total_loss_eval(a, b, w, m) >= w.eps);
  }

  // identical inputs: ε + δ·ε + 0
  CHECK(total_loss_eval(a, a, w) == doctest::Approx(1.05e-3).epsilon(1e-12));

  LossWeights bad;
  bad.delta = -0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("grad_check: total_loss through all three branches") {
  for (LossMode m : {LossMode::kPrinted, LossMode::kNormalized}) {
    Param<double> pred(oracle::random_tensor<double>(Shape{1, 2, 6, 5}, 14));
    TensorD target = oracle::random_tensor<double>(Shape{1, 2, 6, 5}, 15);
    LossWeights w;
    auto res = grad_check<double>(
        {&pred}, [&](Tape<double>& tp) {
          return total_loss(tp, tp.param(pred), tp.constant(target), w, m);
        });
    INFO(res.str());
    CHECK(res.max_rel_err < 1e-5);
  }
}

TEST_CASE("psnr: closed forms, oracle, and monotone degradation") {
  TensorD a = oracle::random_tensor<double>(Shape{1, 3, 8, 8}, 16, 0.0, 1.0);
  CHECK(psnr(a, a) == 100.0);

  TensorD b = a;
  for (double& v : b.data) v += 0.1;
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));

  TensorD c = oracle::random_tensor<double>(Shape{1, 3, 8, 8}, 17, 0.0, 1.0);
  double mse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - c.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  CHECK(psnr(a, c) == doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-9));

  double prev = 1e9;
  Rng rng(18);
  for (double amp : {0.01, 0.03, 0.1, 0.3, 0.6}) {
    TensorD noisy = a;
    for (double& v : noisy.data) v += rng.uniform(0.5 * amp, amp);
    const double cur = psnr(a, noisy);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("ssim: closed forms") {
  TensorD a = oracle::random_tensor<double>(Shape{1, 3, 16, 16}, 19, 0.0, 1.0);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  const double va = 0.3, vb = 0.7, c1 = 1e-4;
  TensorD ca = Tensor<double>::full(Shape{1, 3, 12, 12}, va);
  TensorD cb = Tensor<double>::full(Shape{1, 3, 12, 12}, vb);
  CHECK(ssim(ca, cb) ==
        doctest::Approx((2 * va * vb + c1) / (va * va + vb * vb + c1)).epsilon(1e-9));

  CHECK_THROWS_AS(ssim(Tensor<double>::zeros(Shape{1, 1, 10, 12}),
                       Tensor<double>::zeros(Shape{1, 1, 10, 12})),
                  ConfigError);
}

TEST_CASE("ssim: matches a direct per-window reference") {
  const std::int64_t H = 14, W = 15;
  TensorD a = oracle::random_tensor<double>(Shape{1, 3, H, W}, 20, 0.0, 1.0);
  TensorD b = a;
  Rng rng(21);
  for (double& v : b.data) v = std::clamp(v + rng.uniform(-0.15, 0.15), 0.0, 1.0);

  // reference: explicit 2D window sums over the grayscale planes
  std::vector<double> gx(H * W, 0.0), gy(H * W, 0.0);
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t i = 0; i < H * W; ++i) {
      gx[i] += a.plane(0, c)[i] / 3.0;
      gy[i] += b.plane(0, c)[i] / 3.0;
    }
  std::vector<double> win(11 * 11);
  {
    double sum = 0.0;
    for (int i = 0; i < 11; ++i)
      for (int j = 0; j < 11; ++j)
        sum += (win[i * 11 + j] =
                    std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2.0 * 1.5 * 1.5)));
    for (double& v : win) v /= sum;
  }
  const double c1 = 1e-4, c2 = 9e-4;
  double acc = 0.0;
  std::int64_t count = 0;
  for (std::int64_t y = 0; y + 11 <= H; ++y)
    for (std::int64_t x = 0; x + 11 <= W; ++x) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double wv = win[i * 11 + j];
          const double px = gx[(y + i) * W + x + j], py = gy[(y + i) * W + x + j];
          mx += wv * px;
          my += wv * py;
          sxx += wv * px * px;
          syy += wv * py * py;
          sxy += wv * px * py;
        }
      const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
      acc += ((2 * mx * my + c1) * (2 * cov + c2)) /
             ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  CHECK(ssim(a, b) == doctest::Approx(acc / count).epsilon(1e-4));
}

TEST_CASE("MetricsReport: means, serialization, and parsing") {
  MetricsReport r;
  r.psnr_db = {30.0, 32.5, 28.25};
  r.ssim_val = {0.9, 0.95, 0.85};
  CHECK(r.mean_psnr() == doctest::Approx((30.0 + 32.5 + 28.25) / 3).epsilon(1e-12));
  CHECK(r.mean_ssim() == doctest::Approx(0.9).epsilon(1e-12));

  MetricsReport back = MetricsReport::parse(r.str());
  REQUIRE(back.count() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.psnr_db[i] == doctest::Approx(r.psnr_db[i]).epsilon(1e-9));
    CHECK(back.ssim_val[i] == doctest::Approx(r.ssim_val[i]).epsilon(1e-9));
  }

  CHECK_THROWS_AS(MetricsReport::parse("images 2\nimage 0 psnr 1 ssim 1\n"), IoError);
  CHECK_THROWS_AS(MetricsReport::parse("bogus\n"), IoError);
}
