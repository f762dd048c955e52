// SPDX-License-Identifier: Apache-2.0

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dhnet/checkpoint.hpp"
#include "dhnet/config.hpp"
#include "dhnet/dataset.hpp"
#include "dhnet/dhnet.hpp"
#include "dhnet/gradcheck.hpp"
#include "dhnet/image_io.hpp"
#include "dhnet/log.hpp"
#include "dhnet/metrics.hpp"
#include "dhnet/polynomial.hpp"
#include "dhnet/train.hpp"

namespace {

using namespace dhnet;

/// Usage problems CLI11 cannot express declaratively (e.g. mutually
/// dependent flags); mapped to exit code 2 like any other usage error.
struct UsageFailure {
  std::string msg;
};

AppConfig assemble_config(const std::string& path,
                          const std::vector<std::string>& sets) {
  AppConfig cfg;
  if (!path.empty()) cfg = load_config_file(path);
  for (const auto& kv : sets) apply_override(cfg, kv);
  return cfg;
}

std::string pick_precision(const std::string& flag) {
  if (flag == "single" || flag == "float") return "float";
  return "double";
}

// --------------------------------------------------------------------------
// train / eval / infer, templated on the arithmetic type
// --------------------------------------------------------------------------

template <typename T>
int run_train(const AppConfig& cfg, const std::string& manifest_path,
              const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::string ckpt = (std::filesystem::path(out_dir) / "checkpoint.dhn").string();
  TrainState<T> st = make_train_state<T>(cfg);
  DatasetManifest manifest = DatasetManifest::load(manifest_path);
  auto data = load_pairs<T>(manifest);
  TrainResult<T> res = train_loop(st, data, ckpt);
  std::printf("checkpoint %s\n", res.checkpoint_path.c_str());
  if (!res.losses.empty()) std::printf("final_loss %.9g\n", res.losses.back());
  return 0;
}

template <typename T>
int run_eval(const std::string& ckpt, const std::string& manifest_path) {
  TrainState<T> st = load_train_state<T>(ckpt);
  DatasetManifest manifest = DatasetManifest::load(manifest_path);
  MetricsReport rep = evaluate_pairs(st.net, manifest);
  std::fputs(rep.str().c_str(), stdout);
  return 0;
}

template <typename T>
int run_infer(const std::string& ckpt, const std::vector<std::string>& inputs,
              const std::string& out_dir) {
  TrainState<T> st = load_train_state<T>(ckpt);
  std::filesystem::create_directories(out_dir);
  for (const auto& in : inputs) {
    Tensor<T> img = tensor_cast<T>(read_png(in));
    Tensor<double> restored = tensor_cast<double>(dhnet_infer(img, st.net));
    const std::string out =
        (std::filesystem::path(out_dir) / std::filesystem::path(in).filename())
            .string();
    write_png(out, restored);
    std::printf("wrote %s\n", out.c_str());
  }
  return 0;
}

/// Dispatches on the precision recorded inside the checkpoint itself, so the
/// right instantiation is chosen before any tensor is loaded.
template <typename Fn>
int with_checkpoint_precision(const std::string& ckpt, Fn&& fn) {
  StateFields sf;
  AppConfig cfg = checkpoint_config(ckpt, &sf);
  if (cfg.net.precision == "double") return fn(double{});
  return fn(float{});
}

// --------------------------------------------------------------------------
// gradcheck battery
// --------------------------------------------------------------------------

struct CheckRow {
  std::string name;
  GradCheckResult res;
  double tol = 0.0;
};

/// Initializes every parameter with the standard scheme, then jitters all
/// coordinates (biases and norm scales included) so no gradient path sits at
/// a symmetric point where errors could cancel.
template <typename Params>
std::vector<Param<double>*> init_and_collect(Params& p, const std::string& prefix,
                                             std::uint64_t seed, Rng& jitter) {
  std::vector<Param<double>*> out;
  visit_params(p, prefix, [&](const std::string& n, Param<double>& q) {
    default_init_param(n, q, seed);
    for (auto& v : q.value.data) v += jitter.uniform(-0.05, 0.05);
    out.push_back(&q);
  });
  return out;
}

int run_gradcheck(std::uint64_t seed) {
  std::vector<CheckRow> rows;
  Rng rng = Rng::stream(seed, 0x67726164ull);

  auto add_row = [&rows](const std::string& name, GradCheckResult r, double tol) {
    rows.push_back({name, r, tol});
  };

  {
    auto p = make_conv<double>(3, 3, 3, 1, 3);
    Rng jitter = Rng::stream(seed, 1);
    auto params = init_and_collect(p, "conv3x3", seed, jitter);
    Tensor<double> x({1, 3, 5, 5});
    x.fill_uniform(rng, -1.0, 1.0);
    add_row("conv3x3_depthwise",
            grad_check<double>(params,
                               [&](Tape<double>& tp) {
                                 return op_sum(tp, apply_conv(tp, tp.constant(x), p));
                               }),
            1e-5);
  }
  {
    auto p = make_conv<double>(3, 5, 1);
    Rng jitter = Rng::stream(seed, 2);
    auto params = init_and_collect(p, "conv1x1", seed, jitter);
    Tensor<double> x({1, 3, 4, 4});
    x.fill_uniform(rng, -1.0, 1.0);
    add_row("conv1x1",
            grad_check<double>(params,
                               [&](Tape<double>& tp) {
                                 return op_sum(tp, apply_conv(tp, tp.constant(x), p));
                               }),
            1e-5);
  }
  {
    LayerNormParams<double> p(4);
    Rng jitter = Rng::stream(seed, 3);
    auto params = init_and_collect(p, "ln", seed, jitter);
    Tensor<double> x({1, 4, 3, 3});
    x.fill_uniform(rng, -1.0, 1.0);
    add_row("layer_norm",
            grad_check<double>(params,
                               [&](Tape<double>& tp) {
                                 return op_sum(tp,
                                               apply_layer_norm(tp, tp.constant(x), p));
                               }),
            1e-5);
  }
  {
    auto p = make_volterra_second_order<double>(4, 2);
    Rng jitter = Rng::stream(seed, 4);
    auto params = init_and_collect(p, "volterra", seed, jitter);
    Tensor<double> x({1, 4, 5, 5});
    x.fill_uniform(rng, -1.0, 1.0);
    add_row("volterra_second_order",
            grad_check<double>(params,
                               [&](Tape<double>& tp) {
                                 return op_sum(
                                     tp, volterra_second_order(tp, tp.constant(x), p));
                               }),
            1e-5);
  }
  {
    auto p = make_vblock<double>(4, 2, 2);
    Rng jitter = Rng::stream(seed, 5);
    auto params = init_and_collect(p, "vblock", seed, jitter);
    Tensor<double> x({1, 4, 6, 6});
    x.fill_uniform(rng, -1.0, 1.0);
    add_row("vblock",
            grad_check<double>(params,
                               [&](Tape<double>& tp) {
                                 return op_sum(tp, vblock_forward(tp, tp.constant(x), p));
                               },
                               1e-5, 8),
            1e-4);
  }
  {
    auto p = make_ddre<double>(4, 2, 2, 2);
    Rng jitter = Rng::stream(seed, 6);
    auto params = init_and_collect(p, "ddre", seed, jitter);
    Tensor<double> x({1, 4, 6, 6}), prior({1, 2, 6, 6});
    x.fill_uniform(rng, -1.0, 1.0);
    prior.fill_uniform(rng, -1.0, 1.0);
    add_row("ddre",
            grad_check<double>(params,
                               [&](Tape<double>& tp) {
                                 return op_sum(
                                     tp, ddre_forward(tp, tp.constant(x), prior, p));
                               },
                               1e-5, 8),
            1e-4);
  }
  {
    NetworkConfig cfg;
    cfg.width = 4;
    cfg.blocks = {1, 0, 0, 1, 0, 0, 0, 0, 1};
    cfg.q = 1;
    cfg.s = 2;
    cfg.t = 2;
    cfg.prior = PriorVariant::kNone;
    cfg.precision = "double";
    auto net = make_dhnet<double>(cfg, seed);
    std::vector<Param<double>*> params;
    visit_params(net, [&](const std::string&, Param<double>& q) { params.push_back(&q); });
    Tensor<double> x({1, 3, 8, 8});
    x.fill_uniform(rng, 0.0, 1.0);
    add_row("dhnet_toy",
            grad_check<double>(params,
                               [&](Tape<double>& tp) {
                                 return op_sum(tp, dhnet_forward(tp, tp.constant(x), net));
                               },
                               1e-5, 3, 0x5eedf00d, 1e-4),
            1e-4);
  }

  std::printf("%-24s %7s %13s %9s %s\n", "check", "coords", "max_rel_err", "tol",
              "status");
  bool ok = true;
  for (const auto& r : rows) {
    const bool pass = r.res.max_rel_err < r.tol;
    ok = ok && pass;
    std::printf("%-24s %7lld %13.3e %9.0e %s\n", r.name.c_str(),
                static_cast<long long>(r.res.coords_checked), r.res.max_rel_err, r.tol,
                pass ? "pass" : "FAIL");
    if (!pass) log_error("worst offender: " + r.res.str());
  }
  if (!ok) {
    log_error("gradient check failed");
    return 1;
  }
  return 0;
}

int run_fit_activation(std::int64_t degree, std::int64_t samples, double lo,
                       double hi) {
  auto sigmoid = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  PolyFit fit = fit_memoryless_polynomial(sigmoid, lo, hi, degree, samples);
  std::printf("degree %lld on [%g, %g], %lld samples%s\n",
              static_cast<long long>(degree), lo, hi,
              static_cast<long long>(samples),
              fit.used_fallback ? " (orthogonal-basis fallback)" : "");
  std::printf("coeffs");
  for (double c : fit.poly.coeffs) std::printf(" %.12g", c);
  std::printf("\n");
  std::printf("fit_max_residual %.12g\n", fit.fit_error);
  const double taylor =
      max_residual(sigmoid_cubic_reference(), sigmoid, lo, hi, samples);
  std::printf("taylor_cubic_max_residual %.12g\n", taylor);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DHNet differential-handling deblurring toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", checkpoint, precision_flag;
  std::vector<std::string> overrides, inputs;
  std::string manifest_path;
  bool baseline = false;
  std::uint64_t seed = 0;
  std::int64_t workers = 0, height = 256, width = 256;
  std::int64_t degree = 3, samples = 2001;
  double fit_lo = -1.0, fit_hi = 1.0;
  bool seed_given = false, workers_given = false;

  auto add_config_flags = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Configuration file");
    sub->add_option("--set", overrides,
                    "Override a config key, e.g. --set network.width=16 (repeatable)");
  };
  auto add_seed_flag = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Override the seed used by this command")
        ->each([&](const std::string&) { seed_given = true; });
  };

  CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic blur dataset");
  gen->add_option("dir", out_dir, "Output directory")->required();
  add_config_flags(gen);
  add_seed_flag(gen);

  CLI::App* train = app.add_subcommand("train", "Train a model on a dataset manifest");
  train->add_option("manifest", manifest_path, "Dataset manifest file")->required();
  add_config_flags(train);
  add_seed_flag(train);
  train->add_option("--out", out_dir, "Directory for the checkpoint");
  train->add_option("--workers", workers, "Gradient worker threads")
      ->each([&](const std::string&) { workers_given = true; });
  train->add_option("--precision", precision_flag, "Arithmetic type")
      ->check(CLI::IsMember({"single", "double", "float"}));

  CLI::App* eval = app.add_subcommand("eval", "Score restorations against sharp images");
  eval->add_option("manifest", manifest_path, "Dataset manifest file")->required();
  eval->add_option("--checkpoint", checkpoint, "Trained model checkpoint");
  eval->add_flag("--baseline", baseline, "Score the blurred inputs instead of a model");
  add_seed_flag(eval);

  CLI::App* infer = app.add_subcommand("infer", "Restore images with a trained model");
  infer->add_option("images", inputs, "Input image files")->required();
  infer->add_option("--checkpoint", checkpoint, "Trained model checkpoint")->required();
  infer->add_option("--out", out_dir, "Directory for restored images");
  add_seed_flag(infer);

  CLI::App* gc = app.add_subcommand("gradcheck",
                                    "Verify analytic gradients against finite differences");
  add_seed_flag(gc);

  CLI::App* cx = app.add_subcommand("complexity",
                                    "Print parameter and MAC counts for a configuration");
  add_config_flags(cx);
  add_seed_flag(cx);
  cx->add_option("--height", height, "Input height (default 256)");
  cx->add_option("--width", width, "Input width (default 256)");

  CLI::App* fit = app.add_subcommand("fit-activation",
                                     "Fit a memoryless polynomial to the sigmoid");
  fit->add_option("--degree", degree, "Polynomial degree (default 3)");
  fit->add_option("--samples", samples, "Sample-grid size (default 2001)");
  fit->add_option("--lo", fit_lo, "Interval lower end (default -1)");
  fit->add_option("--hi", fit_hi, "Interval upper end (default 1)");
  add_seed_flag(fit);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n"
              << "run with --help for usage\n";
    return 2;
  }

  try {
    if (gen->parsed()) {
      AppConfig cfg = assemble_config(config_path, overrides);
      if (seed_given) cfg.data.seed = seed;
      cfg.validate();
      DatasetManifest m = generate_dataset(out_dir, cfg.data);
      std::printf("wrote %zu pairs to %s (blur %s)\n", m.pairs.size(), out_dir.c_str(),
                  m.blur_hash.c_str());
      return 0;
    }
    if (train->parsed()) {
      AppConfig cfg = assemble_config(config_path, overrides);
      if (seed_given) cfg.train.seed = seed;
      if (workers_given) cfg.train.workers = workers;
      if (!precision_flag.empty()) cfg.net.precision = pick_precision(precision_flag);
      cfg.validate();
      if (cfg.net.precision == "double")
        return run_train<double>(cfg, manifest_path, out_dir);
      return run_train<float>(cfg, manifest_path, out_dir);
    }
    if (eval->parsed()) {
      if (baseline) {
        DatasetManifest m = DatasetManifest::load(manifest_path);
        std::fputs(baseline_pairs(m).str().c_str(), stdout);
        return 0;
      }
      if (checkpoint.empty())
        throw UsageFailure{"eval needs --checkpoint (or --baseline)"};
      return with_checkpoint_precision(checkpoint, [&](auto tag) {
        return run_eval<decltype(tag)>(checkpoint, manifest_path);
      });
    }
    if (infer->parsed()) {
      return with_checkpoint_precision(checkpoint, [&](auto tag) {
        return run_infer<decltype(tag)>(checkpoint, inputs, out_dir);
      });
    }
    if (gc->parsed()) return run_gradcheck(seed_given ? seed : 29);
    if (cx->parsed()) {
      AppConfig cfg = assemble_config(config_path, overrides);
      cfg.net.validate();
      std::fputs(count_params_macs(cfg.net, height, width).str().c_str(), stdout);
      return 0;
    }
    if (fit->parsed()) return run_fit_activation(degree, samples, fit_lo, fit_hi);
  } catch (const UsageFailure& e) {
    std::cerr << "error: " << e.msg << "\n"
              << "run with --help for usage\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
