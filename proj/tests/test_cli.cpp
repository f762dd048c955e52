// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dhnet/dhnet.hpp"
#include "dhnet/image_io.hpp"
#include "dhnet/metrics.hpp"
#include "dhnet/polynomial.hpp"

using namespace dhnet;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// Runs the installed binary with stdout/stderr captured to files; the
/// sandbox has no spaces in any involved path, so plain joining is safe.
CliResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path dir = fs::path("cli_scratch") / "io";
  fs::create_directories(dir);
  const fs::path out = dir / ("out" + std::to_string(counter) + ".txt");
  const fs::path err = dir / ("err" + std::to_string(counter) + ".txt");
  ++counter;
  const std::string cmd =
      std::string(DHNET_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::path("cli_scratch") / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string toy_config_text() {
  return "[network]\n"
         "width = 4\n"
         "blocks = 1,0,0,1,0,0,0,0,1\n"
         "q = 1\n"
         "s = 2\n"
         "t = 2\n"
         "prior = none\n"
         "[train]\n"
         "steps = 3\n"
         "batch = 2\n"
         "patch = 16\n"
         "log_every = 1\n"
         "[data]\n"
         "count = 3\n"
         "height = 24\n"
         "width = 24\n"
         "rows = 1\n"
         "cols = 1\n"
         "band = 0\n"
         "min_length = 3\n"
         "max_length = 5\n";
}

fs::path write_toy_config(const fs::path& dir) {
  const fs::path p = dir / "toy.cfg";
  std::ofstream(p) << toy_config_text();
  return p;
}

bool trees_equal(const fs::path& a, const fs::path& b) {
  std::vector<std::string> names_a, names_b;
  for (const auto& e : fs::directory_iterator(a)) names_a.push_back(e.path().filename());
  for (const auto& e : fs::directory_iterator(b)) names_b.push_back(e.path().filename());
  std::sort(names_a.begin(), names_a.end());
  std::sort(names_b.begin(), names_b.end());
  if (names_a != names_b) return false;
  for (const auto& n : names_a)
    if (slurp(a / n) != slurp(b / n)) return false;
  return true;
}

}  // namespace

TEST_CASE("usage errors exit with code 2 and an explanation on stderr") {
  CliResult bad_flag = run_cli("--no-such-flag");
  CHECK(bad_flag.code == 2);
  CHECK(bad_flag.err.find("--help") != std::string::npos);
  CHECK(bad_flag.out.empty());

  CliResult bad_sub = run_cli("frobnicate");
  CHECK(bad_sub.code == 2);

  CliResult bad_sub_flag = run_cli("complexity --bogus");
  CHECK(bad_sub_flag.code == 2);

  CliResult missing_arg = run_cli("train");
  CHECK(missing_arg.code == 2);
}

TEST_CASE("help exits zero and lists every subcommand") {
  CliResult r = run_cli("--help");
  CHECK(r.code == 0);
  for (const char* sub : {"gen-data", "train", "eval", "infer", "gradcheck",
                          "complexity", "fit-activation"})
    CHECK(r.out.find(sub) != std::string::npos);
}

TEST_CASE("complexity output matches the in-process accounting") {
  CliResult r = run_cli("complexity --set network.width=8 --height 64 --width 64");
  REQUIRE(r.code == 0);

  NetworkConfig cfg;
  cfg.width = 8;
  ComplexityReport rep = count_params_macs(cfg, 64, 64);
  const std::string expect =
      "total " + std::to_string(rep.total_params) + " " + std::to_string(rep.total_macs);
  CHECK(r.out.find(expect) != std::string::npos);

  // a config file and the equivalent --set overrides print identical reports
  const fs::path dir = scratch_dir("cx");
  const fs::path cfg_path = write_toy_config(dir);
  CliResult from_file = run_cli("complexity --config " + cfg_path.string());
  CliResult from_sets = run_cli(
      "complexity --set network.width=4 --set network.blocks=1,0,0,1,0,0,0,0,1 "
      "--set network.q=1 --set network.s=2 --set network.t=2");
  REQUIRE(from_file.code == 0);
  REQUIRE(from_sets.code == 0);
  CHECK(from_file.out == from_sets.out);
}

TEST_CASE("bad override values are usage-checked before any work") {
  CliResult unknown = run_cli("complexity --set network.depth=9");
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("network.depth") != std::string::npos);

  CliResult malformed = run_cli("complexity --set network.width");
  CHECK(malformed.code == 1);
}

TEST_CASE("gen-data reruns with the same seed are byte-identical, different seeds differ") {
  const fs::path dir = scratch_dir("gen");
  const fs::path cfg = write_toy_config(dir);
  const std::string base = "gen-data " + (dir / "a").string() + " --config " + cfg.string();

  CliResult a = run_cli(base + " --seed 11");
  REQUIRE(a.code == 0);
  CliResult b = run_cli("gen-data " + (dir / "b").string() + " --config " + cfg.string() +
                        " --seed 11");
  REQUIRE(b.code == 0);
  CHECK(trees_equal(dir / "a", dir / "b"));

  CliResult c = run_cli("gen-data " + (dir / "c").string() + " --config " + cfg.string() +
                        " --seed 12");
  REQUIRE(c.code == 0);
  CHECK_FALSE(trees_equal(dir / "a", dir / "c"));
}

TEST_CASE("train, eval, and infer round-trip through the command line") {
  const fs::path dir = scratch_dir("pipeline");
  const fs::path cfg = write_toy_config(dir);
  REQUIRE(run_cli("gen-data " + (dir / "data").string() + " --config " + cfg.string() +
                  " --seed 5")
              .code == 0);
  const std::string manifest = (dir / "data" / "manifest.txt").string();

  CliResult tr = run_cli("train " + manifest + " --config " + cfg.string() + " --out " +
                         (dir / "run").string());
  REQUIRE(tr.code == 0);
  CHECK(tr.out.find("checkpoint ") != std::string::npos);
  const fs::path ckpt = dir / "run" / "checkpoint.dhn";
  REQUIRE(fs::exists(ckpt));

  // model scores parse back exactly through the documented report format
  CliResult ev = run_cli("eval " + manifest + " --checkpoint " + ckpt.string());
  REQUIRE(ev.code == 0);
  MetricsReport rep = MetricsReport::parse(ev.out);
  CHECK(rep.count() == 3);
  CHECK(rep.str() == ev.out);

  // the baseline path needs no checkpoint; asking for neither is a usage error
  CliResult bl = run_cli("eval " + manifest + " --baseline");
  REQUIRE(bl.code == 0);
  CHECK(MetricsReport::parse(bl.out).count() == 3);
  CHECK(run_cli("eval " + manifest).code == 2);

  CliResult inf = run_cli("infer " + (dir / "data" / "blur_0000.png").string() +
                          " --checkpoint " + ckpt.string() + " --out " +
                          (dir / "restored").string());
  REQUIRE(inf.code == 0);
  const fs::path restored = dir / "restored" / "blur_0000.png";
  REQUIRE(fs::exists(restored));
  TensorD img = read_png(restored.string());
  CHECK(img.shape.h == 24);
  CHECK(img.shape.w == 24);

  // a rerun of the whole pipeline reproduces the checkpoint bit for bit
  CliResult tr2 = run_cli("train " + manifest + " --config " + cfg.string() + " --out " +
                          (dir / "run2").string());
  REQUIRE(tr2.code == 0);
  CHECK(slurp(ckpt) == slurp(dir / "run2" / "checkpoint.dhn"));

  // missing checkpoint is a runtime failure, not a usage failure
  CliResult gone = run_cli("eval " + manifest + " --checkpoint " +
                           (dir / "absent.dhn").string());
  CHECK(gone.code == 1);
  CHECK_FALSE(gone.err.empty());
}

TEST_CASE("train honors --seed by producing a different checkpoint") {
  const fs::path dir = scratch_dir("seed");
  const fs::path cfg = write_toy_config(dir);
  REQUIRE(run_cli("gen-data " + (dir / "data").string() + " --config " + cfg.string())
              .code == 0);
  const std::string manifest = (dir / "data" / "manifest.txt").string();
  REQUIRE(run_cli("train " + manifest + " --config " + cfg.string() + " --seed 1 --out " +
                  (dir / "r1").string())
              .code == 0);
  REQUIRE(run_cli("train " + manifest + " --config " + cfg.string() + " --seed 2 --out " +
                  (dir / "r2").string())
              .code == 0);
  CHECK(slurp(dir / "r1" / "checkpoint.dhn") != slurp(dir / "r2" / "checkpoint.dhn"));
}

TEST_CASE("gradcheck battery passes and reports one row per check") {
  CliResult r = run_cli("gradcheck --seed 29");
  REQUIRE(r.code == 0);
  for (const char* row : {"conv3x3", "layer_norm", "volterra", "vblock", "ddre", "dhnet"})
    CHECK(r.out.find(row) != std::string::npos);
  CHECK(r.out.find("FAIL") == std::string::npos);
}

TEST_CASE("fit-activation beats the cubic Taylor reference") {
  CliResult r = run_cli("fit-activation --degree 3");
  REQUIRE(r.code == 0);

  std::istringstream is(r.out);
  std::string line;
  std::vector<double> coeffs;
  double fit_res = -1.0, taylor_res = -1.0;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "coeffs") {
      double v;
      while (ls >> v) coeffs.push_back(v);
    } else if (key == "fit_max_residual") {
      ls >> fit_res;
    } else if (key == "taylor_cubic_max_residual") {
      ls >> taylor_res;
    }
  }
  REQUIRE(coeffs.size() == 4);
  REQUIRE(fit_res >= 0.0);
  REQUIRE(taylor_res >= 0.0);
  CHECK(fit_res <= taylor_res);

  // printed coefficients really achieve the printed residual
  auto sigmoid = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  const double replay = max_residual(Polynomial(coeffs), sigmoid, -1.0, 1.0, 2001);
  CHECK(replay == doctest::Approx(fit_res).epsilon(1e-6));
}
