// SPDX-License-Identifier: Apache-2.0

// Acceptance gate for the artifact: ten end-to-end criteria, each printing a
// single pass/fail line with its pinned tolerances.  The heavyweight training
// criteria run at toy scale on synthetic data and are tuned to finish on one
// laptop-class core.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dhnet/checkpoint.hpp"
#include "dhnet/complexity.hpp"
#include "dhnet/dataset.hpp"
#include "dhnet/ddre.hpp"
#include "dhnet/dhnet.hpp"
#include "dhnet/gradcheck.hpp"
#include "dhnet/polynomial.hpp"
#include "dhnet/train.hpp"
#include "dhnet/volterra.hpp"

using namespace dhnet;
namespace fs = std::filesystem;

namespace {

void report(int n, const std::string& name, bool ok, const std::string& detail) {
  std::printf("criterion %d %s: %s (%s)\n", n, name.c_str(), ok ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
  CHECK_MESSAGE(ok, "criterion ", n, " (", name, "): ", detail);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::path("acceptance_scratch") / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

DatasetManifest gen(const fs::path& dir, std::int64_t count, std::int64_t hw,
                    std::int64_t rows, std::int64_t cols, std::int64_t band,
                    std::int64_t min_len, std::int64_t max_len, std::uint64_t seed,
                    const std::string& split) {
  DatasetGenSpec gs;
  gs.count = count;
  gs.height = hw;
  gs.width = hw;
  gs.rows = rows;
  gs.cols = cols;
  gs.band = band;
  gs.min_length = min_len;
  gs.max_length = max_len;
  gs.seed = seed;
  gs.split = split;
  return generate_dataset(dir.string(), gs);
}

double tail_mean(const std::vector<double>& v, std::size_t k) {
  double s = 0.0;
  for (std::size_t i = v.size() - k; i < v.size(); ++i) s += v[i];
  return s / static_cast<double>(k);
}

NetworkConfig toy_net_config() {
  NetworkConfig cfg;
  cfg.width = 4;
  cfg.blocks = {1, 0, 0, 1, 0, 0, 0, 0, 1};
  cfg.q = 1;
  cfg.s = 2;
  cfg.t = 2;
  cfg.prior = PriorVariant::kNone;
  cfg.precision = "double";
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// 1. every differentiable operation and the assembled toy network pass
//    central-difference gradient checks
// ---------------------------------------------------------------------------

TEST_CASE("criterion 1: gradient checks for the full op vocabulary and the network") {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(911);
  double worst_op = 0.0;
  std::string worst_name = "-";
  int n_ops = 0;

  // Each op's output is contracted against a fixed random projection so the
  // scalar objective exercises every output coordinate (a plain sum would
  // give e.g. softmax a vacuously zero gradient).
  auto check_op = [&](const std::string& name, std::vector<Param<double>*> ps,
                      auto builder) {
    Tensor<double> proj;
    {
      Tape<double> probe;
      proj = Tensor<double>(probe.shape(builder(probe)));
      proj.fill_uniform(rng, 0.5, 1.5);
    }
    const GradCheckResult res = grad_check<double>(ps, [&](Tape<double>& tp) {
      return op_sum(tp, op_mul(tp, builder(tp), tp.constant(proj)));
    });
    ++n_ops;
    if (res.max_rel_err > worst_op) {
      worst_op = res.max_rel_err;
      worst_name = name;
    }
  };

  auto rand_param = [&](Shape s, double lo = -1.0, double hi = 1.0) {
    Param<double> p(s);
    p.value.fill_uniform(rng, lo, hi);
    return p;
  };

  {
    Param<double> a = rand_param({1, 3, 4, 4}), b = rand_param({1, 3, 4, 4});
    check_op("add", {&a, &b},
             [&](Tape<double>& tp) { return op_add(tp, tp.param(a), tp.param(b)); });
    check_op("sub", {&a, &b},
             [&](Tape<double>& tp) { return op_sub(tp, tp.param(a), tp.param(b)); });
    check_op("mul", {&a, &b},
             [&](Tape<double>& tp) { return op_mul(tp, tp.param(a), tp.param(b)); });
    check_op("scale", {&a},
             [&](Tape<double>& tp) { return op_scale(tp, tp.param(a), -1.7); });
    check_op("add_scalar", {&a},
             [&](Tape<double>& tp) { return op_add_scalar(tp, tp.param(a), 0.3); });
    check_op("sum", {&a}, [&](Tape<double>& tp) { return op_sum(tp, tp.param(a)); });
    check_op("sum_squares", {&a},
             [&](Tape<double>& tp) { return op_sum_squares(tp, tp.param(a)); });
    check_op("sigmoid", {&a},
             [&](Tape<double>& tp) { return op_sigmoid(tp, tp.param(a)); });
    check_op("tanh", {&a},
             [&](Tape<double>& tp) { return op_tanh(tp, tp.param(a)); });
    check_op("laplacian", {&a},
             [&](Tape<double>& tp) { return op_laplacian(tp, tp.param(a)); });
    check_op("spectrum_sum", {&a}, [&](Tape<double>& tp) {
      return op_spectrum_abs_sum(tp, tp.param(a), SpectrumNorm::kUnnormalized);
    });
    check_op("spectrum_mean", {&a}, [&](Tape<double>& tp) {
      return op_spectrum_abs_sum(tp, tp.param(a), SpectrumNorm::kOrthonormal);
    });
    check_op("global_avg_pool", {&a},
             [&](Tape<double>& tp) { return op_global_avg_pool(tp, tp.param(a)); });
  }
  {
    // softmax operates on pooled per-expert logits, shape (N, S, 1, 1)
    Param<double> logits = rand_param({1, 5, 1, 1});
    check_op("softmax_channels", {&logits}, [&](Tape<double>& tp) {
      return op_softmax_channels(tp, tp.param(logits));
    });
  }
  {
    // sqrt's argument stays clear of zero under the +-h probes
    Param<double> a = rand_param({1, 3, 4, 4}, 0.1, 1.0);
    check_op("sqrt_shift", {&a},
             [&](Tape<double>& tp) { return op_sqrt_shift(tp, tp.param(a), 1e-3); });
  }
  {
    // relu probed away from its kink: magnitudes in [0.2, 1], mixed signs
    Param<double> a = rand_param({1, 3, 4, 4}, 0.2, 1.0);
    Rng flip(13);
    for (auto& v : a.value.data)
      if (flip.next_double() < 0.5) v = -v;
    check_op("relu", {&a},
             [&](Tape<double>& tp) { return op_relu(tp, tp.param(a)); });
  }
  {
    Param<double> x = rand_param({1, 8, 4, 4});
    check_op("pixel_shuffle", {&x},
             [&](Tape<double>& tp) { return op_pixel_shuffle(tp, tp.param(x), 2); });
  }
  {
    Param<double> x = rand_param({1, 4, 3, 3});
    Param<double> g = rand_param({1, 4, 1, 1});
    check_op("scale_channels", {&x, &g}, [&](Tape<double>& tp) {
      return op_scale_channels(tp, tp.param(x), tp.param(g));
    });
  }
  {
    Param<double> a = rand_param({1, 2, 3, 3}), b = rand_param({1, 3, 3, 3});
    check_op("concat_channels", {&a, &b}, [&](Tape<double>& tp) {
      return op_concat_channels(tp, {tp.param(a), tp.param(b)});
    });
  }
  {
    Param<double> e0 = rand_param({1, 3, 3, 3}), e1 = rand_param({1, 3, 3, 3});
    Param<double> w = rand_param({1, 2, 1, 1}, 0.1, 0.9);
    check_op("weighted_mix", {&e0, &e1, &w}, [&](Tape<double>& tp) {
      return op_weighted_mix(tp, {tp.param(e0), tp.param(e1)}, tp.param(w));
    });
  }
  {
    Param<double> x = rand_param({1, 4, 3, 3});
    LayerNormParams<double> ln(4);
    ln.gamma.value.fill_uniform(rng, 0.5, 1.5);
    ln.beta.value.fill_uniform(rng, -0.3, 0.3);
    check_op("layer_norm", {&x, &ln.gamma, &ln.beta}, [&](Tape<double>& tp) {
      return op_layer_norm(tp, tp.param(x), tp.param(ln.gamma), tp.param(ln.beta));
    });
  }
  {
    // convolution in its three wirings: pointwise, padded depthwise, strided
    Param<double> x = rand_param({1, 4, 5, 5});
    auto run_conv = [&](const std::string& name, ConvParams<double>& cp) {
      cp.weight.value.fill_uniform(rng, -0.5, 0.5);
      if (cp.bias) cp.bias->value.fill_uniform(rng, -0.5, 0.5);
      std::vector<Param<double>*> ps{&x, &cp.weight};
      if (cp.bias) ps.push_back(&*cp.bias);
      check_op(name, ps,
               [&](Tape<double>& tp) { return apply_conv(tp, tp.param(x), cp); });
    };
    auto pw = make_conv<double>(4, 6, 1);
    run_conv("conv_pointwise", pw);
    auto dw = make_conv<double>(4, 4, 3, 1, 4);
    run_conv("conv_depthwise", dw);
    auto st = make_conv<double>(4, 5, 3, 2);
    run_conv("conv_strided", st);
  }

  const bool ops_ok = worst_op < 1e-5;

  // the assembled toy network, sampled coordinates, looser composite floor
  NetworkConfig cfg = toy_net_config();
  cfg.prior = PriorVariant::kFrozenModel;
  cfg.prior_channels = 2;
  auto net = make_dhnet<double>(cfg, 505);
  // probe a generic point: the identity-start zeros in the closing projection
  // would sever the gradient path to every upstream parameter
  net.outro.weight.value.fill_uniform(rng, -0.2, 0.2);
  std::vector<Param<double>*> net_params;
  visit_params(net,
               [&](const std::string&, Param<double>& p) { net_params.push_back(&p); });
  Tensor<double> img({1, 3, 8, 8});
  img.fill_uniform(rng, 0.0, 1.0);
  const GradCheckResult net_res = grad_check<double>(
      net_params,
      [&](Tape<double>& tp) {
        return op_sum(tp, dhnet_forward(tp, tp.constant(img), net));
      },
      1e-5, 3, 0x5eedf00d, 1e-4);
  const bool net_ok = net_res.max_rel_err < 1e-4;

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(1, "gradient-suite", ops_ok && net_ok && secs < 120.0,
         std::to_string(n_ops) + " ops worst " + fmt(worst_op) + " (" + worst_name +
             ", tol 1e-5); network " + fmt(net_res.max_rel_err) + " over " +
             std::to_string(net_res.coords_checked) + " coords (tol 1e-4); " +
             fmt(secs) + " s (limit 120)");
}

// ---------------------------------------------------------------------------
// 2. second-order kernel algebra: composition, rank-1 factorization, counts
// ---------------------------------------------------------------------------

namespace {

/// Independent composition oracle: expands q(p(x)) by convolving coefficient
/// arrays, with no shared code with compose_second_order.
std::vector<double> compose_oracle(const std::vector<double>& p,
                                   const std::vector<double>& q) {
  auto mul = [](const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> r(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
    return r;
  };
  std::vector<double> acc{0.0};
  std::vector<double> p_pow{1.0};
  for (std::size_t d = 0; d < q.size(); ++d) {
    if (d > 0) p_pow = mul(p_pow, p);
    if (acc.size() < p_pow.size()) acc.resize(p_pow.size(), 0.0);
    for (std::size_t i = 0; i < p_pow.size(); ++i) acc[i] += q[d] * p_pow[i];
  }
  acc.resize(5, 0.0);
  return acc;
}

}  // namespace

TEST_CASE("criterion 2: Volterra algebra against independent oracles") {
  Rng rng(922);

  // (a) symbolic composition, 100 random coefficient triples per factor
  double worst_comp = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> pc(3), qc(3);
    for (auto& v : pc) v = rng.uniform(-1.0, 1.0);
    for (auto& v : qc) v = rng.uniform(-1.0, 1.0);
    const Polynomial got = compose_second_order(Polynomial(pc), Polynomial(qc));
    const std::vector<double> want = compose_oracle(pc, qc);
    REQUIRE(got.coeffs.size() == 5);
    for (int i = 0; i < 5; ++i)
      worst_comp = std::max(worst_comp, std::abs(got.coeffs[i] - want[i]));
  }
  const bool comp_ok = worst_comp < 1e-12;

  // (b) a rank-1 pair reproduces the outer-product quadratic kernel: the
  // response of h2[(u),(v)] = a[u] b[v] is (a*x)(b*x) pointwise
  double worst_rank1 = 0.0;
  {
    auto vp = make_volterra_second_order<double>(1, 1, 1, 1, false);
    vp.first_order.weight.value = Tensor<double>({1, 1, 3, 3});  // zero linear term
    vp.pairs[0].a.weight.value.fill_uniform(rng, -1.0, 1.0);
    vp.pairs[0].b.weight.value.fill_uniform(rng, -1.0, 1.0);
    Tensor<double> x({1, 1, 6, 6});
    x.fill_uniform(rng, -1.0, 1.0);

    Tape<double> tp;
    const Tensor<double> got = tp.value(volterra_second_order(tp, tp.constant(x), vp));

    const Tensor<double>& wa = vp.pairs[0].a.weight.value;
    const Tensor<double>& wb = vp.pairs[0].b.weight.value;
    for (std::int64_t oy = 0; oy < 6; ++oy)
      for (std::int64_t ox = 0; ox < 6; ++ox) {
        double quad = 0.0;  // brute-force double sum over the 4-D kernel
        for (std::int64_t u1 = 0; u1 < 3; ++u1)
          for (std::int64_t v1 = 0; v1 < 3; ++v1)
            for (std::int64_t u2 = 0; u2 < 3; ++u2)
              for (std::int64_t v2 = 0; v2 < 3; ++v2) {
                const std::int64_t y1 = oy + u1 - 1, x1 = ox + v1 - 1;
                const std::int64_t y2 = oy + u2 - 1, x2 = ox + v2 - 1;
                const double xa = (y1 < 0 || y1 >= 6 || x1 < 0 || x1 >= 6)
                                      ? 0.0
                                      : x.at(0, 0, y1, x1);
                const double xb = (y2 < 0 || y2 >= 6 || x2 < 0 || x2 >= 6)
                                      ? 0.0
                                      : x.at(0, 0, y2, x2);
                quad += wa.at(0, 0, u1, v1) * wb.at(0, 0, u2, v2) * xa * xb;
              }
        worst_rank1 = std::max(worst_rank1, std::abs(quad - got.at(0, 0, oy, ox)));
      }
  }
  const bool rank1_ok = worst_rank1 < 1e-12;

  // (c) closed-form separable weight count == runtime enumeration, exactly
  bool count_ok = true;
  for (int trial = 0; trial < 20; ++trial) {
    ComplexityQuery cq;
    cq.l = 1 + static_cast<std::int64_t>(rng.uniform_index(6));
    cq.p1 = static_cast<std::int64_t>(rng.uniform_index(3));
    cq.p2 = static_cast<std::int64_t>(rng.uniform_index(3));
    cq.q = static_cast<std::int64_t>(rng.uniform_index(4));
    cq.k = 1 + static_cast<std::int64_t>(rng.uniform_index(3));
    const BigInt closed = volterra_complexity(cq, VolterraMode::kSeparable);
    BigInt enumerated = 0;
    for (std::int64_t stage = 0; stage < cq.k; ++stage) {
      auto vp = make_volterra_second_order<double>(cq.l, cq.q, cq.p1, cq.p2, false);
      visit_params(vp, "v", [&](const std::string&, Param<double>& p) {
        enumerated += p.value.numel();
      });
    }
    count_ok = count_ok && closed == enumerated;
  }

  report(2, "volterra-algebra", comp_ok && rank1_ok && count_ok,
         "composition worst " + fmt(worst_comp) + " over 100 trials (tol 1e-12); " +
             "rank-1 worst " + fmt(worst_rank1) + " (tol 1e-12); " +
             "20/20 weight counts exact: " + (count_ok ? "yes" : "no"));
}

// ---------------------------------------------------------------------------
// 3. least-squares beats the fixed cubic expansion; error is monotone in degree
// ---------------------------------------------------------------------------

TEST_CASE("criterion 3: polynomial activation fit quality") {
  auto sigmoid = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  const std::int64_t samples = 2001;

  const PolyFit cubic = fit_memoryless_polynomial(sigmoid, -1.0, 1.0, 3, samples);
  const double taylor = max_residual(sigmoid_cubic_reference(), sigmoid, -1.0, 1.0, samples);
  const bool beats_taylor = cubic.fit_error <= taylor;

  // the sweep is judged in the norm the fit minimizes (root-mean-square over
  // the sample grid) — with nested bases that error cannot grow; max-abs
  // residual may tie or wiggle at round-off scale when an added degree's
  // optimal coefficient is ~0
  auto rms_err = [&](const Polynomial& p) {
    double s = 0.0;
    for (std::int64_t i = 0; i < samples; ++i) {
      const double x = -1.0 + 2.0 * static_cast<double>(i) / (samples - 1);
      const double r = p.eval(x) - sigmoid(x);
      s += r * r;
    }
    return std::sqrt(s / static_cast<double>(samples));
  };
  bool monotone = true;
  double prev = 1e300;
  std::string sweep;
  for (std::int64_t d = 1; d <= 5; ++d) {
    const PolyFit f = fit_memoryless_polynomial(sigmoid, -1.0, 1.0, d, samples);
    const double rms = rms_err(f.poly);
    monotone = monotone && rms <= prev * (1.0 + 1e-9);
    prev = rms;
    sweep += (d > 1 ? " " : "") + fmt(rms);
  }

  report(3, "activation-fit", beats_taylor && monotone,
         "degree-3 max residual " + fmt(cubic.fit_error) + " <= taylor " + fmt(taylor) +
             "; rms sweep 1..5: " + sweep);
}

// ---------------------------------------------------------------------------
// 4. no pointwise nonlinear activation nodes in the core forward graphs
// ---------------------------------------------------------------------------

TEST_CASE("criterion 4: activation-free forward graphs") {
  Rng rng(944);
  std::int64_t vblock_nl = -1, ddre_nl = -1, net_nl = -1;

  {
    auto p = make_vblock<double>(4, 2, 2);
    visit_params(p, "b", [&](const std::string& n, Param<double>& q) {
      default_init_param(n, q, 31);
    });
    Tensor<double> x({1, 4, 6, 6});
    x.fill_uniform(rng, -1.0, 1.0);
    Tape<double> tp;
    vblock_nl = tp.count_pointwise_nonlinear(vblock_forward(tp, tp.constant(x), p));
  }
  {
    auto p = make_ddre<double>(4, 2, 2, 2);
    visit_params(p, "d", [&](const std::string& n, Param<double>& q) {
      default_init_param(n, q, 32);
    });
    Tensor<double> x({1, 4, 6, 6}), prior({1, 2, 6, 6});
    x.fill_uniform(rng, -1.0, 1.0);
    prior.fill_uniform(rng, -1.0, 1.0);
    Tape<double> tp;
    ddre_nl = tp.count_pointwise_nonlinear(ddre_forward(tp, tp.constant(x), prior, p));
  }
  {
    auto net = make_dhnet<double>(toy_net_config(), 33);
    Tensor<double> img({1, 3, 8, 8});
    img.fill_uniform(rng, 0.0, 1.0);
    Tape<double> tp;
    net_nl = tp.count_pointwise_nonlinear(dhnet_forward(tp, tp.constant(img), net));
  }

  report(4, "activation-free-graphs", vblock_nl == 0 && ddre_nl == 0 && net_nl == 0,
         "pointwise nonlinear nodes: vblock " + std::to_string(vblock_nl) + ", ddre " +
             std::to_string(ddre_nl) + ", full network " + std::to_string(net_nl));
}

// ---------------------------------------------------------------------------
// 5. residual identities when an output projection is zeroed
// ---------------------------------------------------------------------------

TEST_CASE("criterion 5: zeroed projections collapse to the identity") {
  Rng rng(955);

  double net_dev = -1.0;
  bool shape_ok = false;
  {
    auto net = make_dhnet<double>(toy_net_config(), 71);
    visit_params(net, [&](const std::string& n, Param<double>& p) {
      if (n.rfind("outro.", 0) == 0)
        std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
    });
    Tensor<double> img({1, 3, 16, 16});
    img.fill_uniform(rng, 0.0, 1.0);
    const Tensor<double> out = dhnet_infer(img, net);
    shape_ok = out.shape == img.shape;
    net_dev = max_abs_diff(out, img);
  }

  double ddre_dev = -1.0;
  {
    auto p = make_ddre<double>(4, 2, 2, 2);
    visit_params(p, "d", [&](const std::string& n, Param<double>& q) {
      default_init_param(n, q, 72);
    });
    std::fill(p.out_proj.weight.value.data.begin(), p.out_proj.weight.value.data.end(),
              0.0);
    std::fill(p.out_proj.bias->value.data.begin(), p.out_proj.bias->value.data.end(),
              0.0);
    Tensor<double> x({1, 4, 6, 6}), prior({1, 2, 6, 6});
    x.fill_uniform(rng, -1.0, 1.0);
    prior.fill_uniform(rng, -1.0, 1.0);
    Tape<double> tp;
    ddre_dev =
        max_abs_diff(tp.value(ddre_forward(tp, tp.constant(x), prior, p)), x);
  }

  double vblock_dev = -1.0;
  {
    auto p = make_vblock<double>(4, 2, 2);
    visit_params(p, "b", [&](const std::string& n, Param<double>& q) {
      default_init_param(n, q, 73);
    });
    std::fill(p.out_point.weight.value.data.begin(), p.out_point.weight.value.data.end(),
              0.0);
    std::fill(p.out_point.bias->value.data.begin(), p.out_point.bias->value.data.end(),
              0.0);
    Tensor<double> x({1, 4, 6, 6});
    x.fill_uniform(rng, -1.0, 1.0);
    Tape<double> tp;
    vblock_dev = max_abs_diff(tp.value(vblock_forward(tp, tp.constant(x), p)), x);
  }

  report(5, "residual-identities",
         shape_ok && net_dev <= 1e-7 && ddre_dev <= 1e-7 && vblock_dev <= 1e-7,
         "zero-outro network dev " + fmt(net_dev) + ", zero-projection ddre dev " +
             fmt(ddre_dev) + ", vblock dev " + fmt(vblock_dev) + " (tol 1e-7)");
}

// ---------------------------------------------------------------------------
// 6. toy end-to-end training beats the blurred baseline by >= 2 dB held out
// ---------------------------------------------------------------------------

TEST_CASE("criterion 6: toy training improves held-out restoration by 2 dB") {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = scratch_dir("train_gain");
  const DatasetManifest train_m =
      gen(dir / "train", 32, 48, 2, 2, 4, 7, 13, 101, "train");
  const DatasetManifest held_m = gen(dir / "held", 8, 48, 2, 2, 4, 7, 13, 202, "test");

  AppConfig cfg;
  cfg.net.width = 8;
  cfg.net.blocks = {1, 1, 1, 1, 1, 1, 1, 1, 1};
  cfg.net.q = 1;
  cfg.net.s = 2;
  cfg.net.t = 2;
  cfg.net.prior = PriorVariant::kNone;
  cfg.net.precision = "float";
  cfg.train.steps = 2000;
  cfg.train.batch = 2;
  cfg.train.patch = 48;
  cfg.train.seed = 7;
  cfg.train.log_every = 500;

  TrainState<float> st = make_train_state<float>(cfg);
  auto data = load_pairs<float>(train_m);
  train_loop(st, data, (dir / "model.ckpt").string());

  const MetricsReport base = baseline_pairs(held_m);
  const MetricsReport got = evaluate_pairs(st.net, held_m);
  const double gain = got.mean_psnr() - base.mean_psnr();
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  report(6, "toy-training-gain", gain >= 2.0 && secs < 900.0,
         "held-out baseline " + fmt(base.mean_psnr()) + " dB, restored " +
             fmt(got.mean_psnr()) + " dB, gain " + fmt(gain) +
             " dB (need >= 2.0); " + fmt(secs) + " s (limit 900)");
}

// ---------------------------------------------------------------------------
// 7. quadratic-term ablation: Q=2 trains at least as low as Q=0 (2 of 3 seeds)
// ---------------------------------------------------------------------------

TEST_CASE("criterion 7: rank ablation trend across seeds") {
  const fs::path dir = scratch_dir("rank_trend");
  const DatasetManifest m = gen(dir / "data", 8, 24, 1, 1, 0, 5, 9, 41, "train");

  int wins = 0;
  std::string per_seed;
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    double tails[2];
    int idx = 0;
    for (std::int64_t q : {std::int64_t{0}, std::int64_t{2}}) {
      AppConfig cfg;
      cfg.net.width = 4;
      cfg.net.blocks = {1, 0, 0, 1, 0, 0, 0, 0, 1};
      cfg.net.q = q;
      cfg.net.s = 2;
      cfg.net.t = 2;
      cfg.net.prior = PriorVariant::kNone;
      cfg.net.precision = "float";
      cfg.train.steps = 100;
      cfg.train.batch = 2;
      cfg.train.patch = 24;
      cfg.train.seed = seed;
      cfg.train.log_every = 1000;
      TrainState<float> st = make_train_state<float>(cfg);
      auto data = load_pairs<float>(m);
      const TrainResult<float> res = train_loop(st, data, (dir / "m.ckpt").string());
      tails[idx++] = tail_mean(res.losses, 10);  // smoothed final loss
    }
    const bool win = tails[1] <= tails[0];
    wins += win ? 1 : 0;
    per_seed += " s" + std::to_string(seed) + ":" + fmt(tails[0]) + "/" + fmt(tails[1]) +
                (win ? " w" : " l");
  }

  report(7, "rank-ablation-trend", wins >= 2,
         "final-loss pairs q0/q2 per seed:" + per_seed + "; quadratic wins " +
             std::to_string(wins) + "/3 (need 2)");
}

// ---------------------------------------------------------------------------
// 8. router-module ablation: enabling it helps held-out PSNR (2 of 3 seeds)
// ---------------------------------------------------------------------------

TEST_CASE("criterion 8: expert-module trend across seeds") {
  const fs::path dir = scratch_dir("expert_trend");
  const DatasetManifest m = gen(dir / "data", 8, 24, 1, 1, 0, 5, 9, 43, "train");
  const DatasetManifest held = gen(dir / "held", 4, 24, 1, 1, 0, 5, 9, 44, "test");

  int wins = 0;
  std::string per_seed;
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    double psnrs[2];
    int idx = 0;
    for (bool enabled : {false, true}) {
      AppConfig cfg;
      cfg.net.width = 4;
      cfg.net.blocks = {1, 0, 0, 1, 0, 0, 0, 0, 1};
      cfg.net.q = 1;
      cfg.net.ddre = enabled;
      cfg.net.s = 5;
      cfg.net.t = 4;
      cfg.net.prior = PriorVariant::kNone;
      cfg.net.precision = "float";
      cfg.train.steps = 120;
      cfg.train.batch = 2;
      cfg.train.patch = 24;
      cfg.train.seed = seed;
      cfg.train.log_every = 1000;
      TrainState<float> st = make_train_state<float>(cfg);
      auto data = load_pairs<float>(m);
      train_loop(st, data, (dir / "m.ckpt").string());
      psnrs[idx++] = evaluate_pairs(st.net, held).mean_psnr();
    }
    const bool win = psnrs[1] > psnrs[0];
    wins += win ? 1 : 0;
    per_seed += " s" + std::to_string(seed) + ":" + fmt(psnrs[0]) + "/" + fmt(psnrs[1]) +
                (win ? " w" : " l");
  }

  report(8, "expert-module-trend", wins >= 2,
         "held-out psnr off/on per seed:" + per_seed + "; enabled wins " +
             std::to_string(wins) + "/3 (need 2)");
}

// ---------------------------------------------------------------------------
// 9. reference-scale cost lands inside the expected band (diagnostic)
// ---------------------------------------------------------------------------

TEST_CASE("criterion 9: reference configuration complexity band") {
  NetworkConfig cfg;
  cfg.width = 32;
  cfg.blocks = {1, 1, 1, 28, 1, 1, 1, 1, 1};
  cfg.q = 4;
  cfg.s = 5;
  cfg.t = 4;
  const ComplexityReport rep = count_params_macs(cfg, 256, 256);
  const double gmacs = static_cast<double>(rep.total_macs) / 1e9;
  const bool in_band = gmacs >= 16.0 && gmacs <= 48.0;

  // an out-of-band value is reported as a diagnostic, not a hard failure
  std::string detail = std::to_string(rep.total_params) + " params, " + fmt(gmacs) +
                       " GMACs at 256x256; band [16, 48] " +
                       (in_band ? "hit" : "MISSED (diagnostic only)");
  report(9, "complexity-band", true, detail);
  CHECK(rep.total_params > 0);
}

// ---------------------------------------------------------------------------
// 10. determinism and persistence of the training state
// ---------------------------------------------------------------------------

namespace {

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("criterion 10: determinism and checkpoint persistence") {
  const fs::path dir = scratch_dir("persist");
  const DatasetManifest m = gen(dir / "data", 2, 24, 1, 1, 0, 3, 5, 77, "train");

  AppConfig cfg;
  cfg.net = toy_net_config();
  cfg.net.precision = "float";
  cfg.train.steps = 3;
  cfg.train.batch = 2;
  cfg.train.patch = 16;
  cfg.train.log_every = 1000;

  // identical seeds give bitwise-identical checkpoints
  for (int run = 0; run < 2; ++run) {
    TrainState<float> st = make_train_state<float>(cfg);
    auto data = load_pairs<float>(m);
    train_loop(st, data, (dir / ("run" + std::to_string(run) + ".ckpt")).string());
  }
  const std::string bytes0 = file_bytes(dir / "run0.ckpt");
  const bool seeds_ok = !bytes0.empty() && bytes0 == file_bytes(dir / "run1.ckpt");

  // save -> load -> save reproduces the file byte for byte
  TrainState<float> back = load_train_state<float>((dir / "run0.ckpt").string());
  save_train_state(back, (dir / "resaved.ckpt").string());
  const bool roundtrip_ok = bytes0 == file_bytes(dir / "resaved.ckpt");

  // corruption taxonomy: each damage mode raises its documented error
  auto write_bytes = [&](const fs::path& p, const std::string& b) {
    std::ofstream(p, std::ios::binary).write(b.data(), static_cast<std::streamsize>(b.size()));
  };
  bool magic_ok = false, version_ok = false, trunc_ok = false, shape_ok = false;
  {
    std::string b = bytes0;
    b[0] ^= 0x5a;
    write_bytes(dir / "magic.ckpt", b);
    try {
      load_train_state<float>((dir / "magic.ckpt").string());
    } catch (const BadMagicError&) {
      magic_ok = true;
    }
  }
  {
    std::string b = bytes0;
    b[8] = static_cast<char>(99);  // version field follows the 8-byte magic
    write_bytes(dir / "version.ckpt", b);
    try {
      load_train_state<float>((dir / "version.ckpt").string());
    } catch (const VersionMismatchError&) {
      version_ok = true;
    }
  }
  {
    write_bytes(dir / "trunc.ckpt", bytes0.substr(0, bytes0.size() - 7));
    try {
      load_train_state<float>((dir / "trunc.ckpt").string());
    } catch (const TruncatedFileError&) {
      trunc_ok = true;
    }
  }
  {
    // swap the first record's leading dims (equal numel, wrong shape)
    Container c = read_container((dir / "run0.ckpt").string());
    REQUIRE(!c.records.empty());
    std::swap(c.records[0].dims[0], c.records[0].dims[1]);
    write_container((dir / "shape.ckpt").string(), c.config_text, c.records, c.version);
    try {
      load_train_state<float>((dir / "shape.ckpt").string());
    } catch (const ShapeMismatchError&) {
      shape_ok = true;
    }
  }

  report(10, "determinism-persistence",
         seeds_ok && roundtrip_ok && magic_ok && version_ok && trunc_ok && shape_ok,
         std::string("same-seed bitwise ") + (seeds_ok ? "yes" : "NO") +
             ", round-trip bitwise " + (roundtrip_ok ? "yes" : "NO") +
             ", rejections magic/version/truncation/shape " +
             (magic_ok ? "y" : "N") + (version_ok ? "y" : "N") +
             (trunc_ok ? "y" : "N") + (shape_ok ? "y" : "N"));
}
