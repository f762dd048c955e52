// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dhnet/blur.hpp"
#include "dhnet/errors.hpp"
#include "dhnet/image_io.hpp"
#include "dhnet/rng.hpp"
#include "dhnet/tensor.hpp"

namespace dhnet {

struct ManifestEntry {
  std::string sharp;
  std::string blur;
  std::string label;  // per-region degradation record, may be empty
};

/// Text manifest of (sharp, blur) pairs.  Metadata travels in '#' comment
/// lines; each pair is one line "sharp<TAB>blur", optionally preceded by a
/// "# labels ..." line recording its ground-truth degradation.
struct DatasetManifest {
  std::string split = "train";
  std::string format = "png";
  std::string blur_hash;
  std::vector<ManifestEntry> pairs;

  void save(const std::string& path) const {
    const std::string tmp = path + ".tmp";
    {
      std::ofstream os(tmp, std::ios::binary);
      if (!os) throw IoError("cannot create " + tmp);
      os << "# split " << split << "\n";
      os << "# format " << format << "\n";
      if (!blur_hash.empty()) os << "# blurspec " << blur_hash << "\n";
      for (const ManifestEntry& e : pairs) {
        if (!e.label.empty()) os << "# labels " << e.label << "\n";
        os << e.sharp << '\t' << e.blur << "\n";
      }
      if (!os) throw IoError("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
  }

  /// Relative pair paths are resolved against the manifest's directory.
  static DatasetManifest load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open manifest " + path);
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    DatasetManifest m;
    std::string line;
    std::string pending_label;
    std::int64_t lineno = 0;
    auto resolve = [&](const std::string& p) {
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp.string() : (base / fp).string();
    };
    while (std::getline(is, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (line[0] == '#') {
        std::istringstream ls(line.substr(1));
        std::string key;
        ls >> key;
        std::string rest;
        std::getline(ls, rest);
        if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
        if (key == "split") m.split = rest;
        else if (key == "format") m.format = rest;
        else if (key == "blurspec") m.blur_hash = rest;
        else if (key == "labels") pending_label = rest;
        // unknown comment keys are ignored
        continue;
      }
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw IoError("manifest line " + std::to_string(lineno) +
                      " is not sharp<TAB>blur: " + line);
      }
      ManifestEntry e;
      e.sharp = resolve(line.substr(0, tab));
      e.blur = resolve(line.substr(tab + 1));
      e.label = pending_label;
      pending_label.clear();
      if (e.sharp.empty() || e.blur.empty()) {
        throw IoError("manifest line " + std::to_string(lineno) + " has an empty path");
      }
      m.pairs.push_back(std::move(e));
    }
    return m;
  }
};

/// Deterministic synthetic "photograph": smooth sinusoidal shading overlaid
/// with hard-edged rectangles, giving the restoration task real structure at
/// desk scale.  Values lie in [0,1].
inline Tensor<double> procedural_image(std::int64_t h, std::int64_t w, Rng& rng) {
  if (h < 1 || w < 1) throw ConfigError("procedural image needs positive extent");
  Tensor<double> img(Shape{1, 3, h, w});
  for (std::int64_t c = 0; c < 3; ++c) {
    const double amp = rng.uniform(0.1, 0.3);
    const double fx = rng.uniform(-3.0, 3.0);
    const double fy = rng.uniform(-3.0, 3.0);
    const double phase = rng.uniform(0.0, 6.283185307179586);
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        const double u = static_cast<double>(x) / static_cast<double>(w);
        const double v = static_cast<double>(y) / static_cast<double>(h);
        img.at(0, c, y, x) =
            0.5 + amp * std::sin(6.283185307179586 * (fx * u + fy * v) + phase);
      }
    }
  }
  const std::int64_t boxes = 4;
  for (std::int64_t b = 0; b < boxes; ++b) {
    const std::int64_t bh = 1 + static_cast<std::int64_t>(rng.uniform_index(
                                    static_cast<std::uint64_t>(std::max<std::int64_t>(1, h / 2))));
    const std::int64_t bw = 1 + static_cast<std::int64_t>(rng.uniform_index(
                                    static_cast<std::uint64_t>(std::max<std::int64_t>(1, w / 2))));
    const std::int64_t y0 = static_cast<std::int64_t>(rng.uniform_index(
        static_cast<std::uint64_t>(h - bh + 1)));
    const std::int64_t x0 = static_cast<std::int64_t>(rng.uniform_index(
        static_cast<std::uint64_t>(w - bw + 1)));
    double color[3];
    for (double& cc : color) cc = rng.uniform(0.0, 1.0);
    const double alpha = rng.uniform(0.5, 0.9);
    for (std::int64_t c = 0; c < 3; ++c) {
      for (std::int64_t y = y0; y < y0 + bh; ++y) {
        for (std::int64_t x = x0; x < x0 + bw; ++x) {
          img.at(0, c, y, x) = (1.0 - alpha) * img.at(0, c, y, x) + alpha * color[c];
        }
      }
    }
  }
  for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
  return img;
}

struct DatasetGenSpec {
  std::int64_t count = 8;
  std::int64_t height = 128;
  std::int64_t width = 128;
  std::int64_t rows = 2;
  std::int64_t cols = 2;
  std::int64_t band = 8;
  std::int64_t min_length = 1;
  std::int64_t max_length = 15;
  std::uint64_t seed = 7;
  std::string split = "train";

  void validate() const {
    if (count < 1) throw ConfigError("dataset count must be positive");
    if (height < 8 || width < 8) throw ConfigError("dataset images must be at least 8x8");
    if (rows < 1 || cols < 1) throw ConfigError("blur grid must be at least 1x1");
    if (band < 0) throw ConfigError("blend band must be non-negative");
    if (min_length < 1 || max_length > kMaxBlurLength || min_length > max_length) {
      throw ConfigError("blur length range [" + std::to_string(min_length) + ", " +
                        std::to_string(max_length) + "] invalid");
    }
  }
};

/// Renders `count` procedural sharp images, degrades each with an
/// independently drawn grid blur, and writes PNG pairs plus manifest.txt
/// into `dir`.  Fully deterministic in `spec.seed`.
inline DatasetManifest generate_dataset(const std::string& dir,
                                        const DatasetGenSpec& spec) {
  spec.validate();
  std::filesystem::create_directories(dir);
  DatasetManifest m;
  m.split = spec.split;
  std::uint64_t combined_hash = fnv1a(spec.split) ^ (spec.seed * 0x9e3779b97f4a7c15ull);
  for (std::int64_t i = 0; i < spec.count; ++i) {
    Rng img_rng = Rng::stream(spec.seed, static_cast<std::uint64_t>(2 * i));
    Rng blur_rng = Rng::stream(spec.seed, static_cast<std::uint64_t>(2 * i + 1));
    const Tensor<double> sharp = procedural_image(spec.height, spec.width, img_rng);
    const BlurSpec bs = BlurSpec::random(spec.rows, spec.cols, spec.band,
                                         spec.min_length, spec.max_length,
                                         blur_rng.next_u64());
    const Tensor<double> blur = synth_blur(sharp, bs);
    char name[64];
    std::snprintf(name, sizeof(name), "sharp_%04d.png", static_cast<int>(i));
    const std::string sharp_name = name;
    std::snprintf(name, sizeof(name), "blur_%04d.png", static_cast<int>(i));
    const std::string blur_name = name;
    write_png((std::filesystem::path(dir) / sharp_name).string(), sharp);
    write_png((std::filesystem::path(dir) / blur_name).string(), blur);
    ManifestEntry e;
    e.sharp = sharp_name;
    e.blur = blur_name;
    e.label = bs.label();
    m.pairs.push_back(std::move(e));
    combined_hash = combined_hash * 1099511628211ull + bs.hash();
  }
  std::ostringstream hs;
  hs << "0x" << std::hex << combined_hash;
  m.blur_hash = hs.str();
  m.save((std::filesystem::path(dir) / "manifest.txt").string());
  return DatasetManifest::load((std::filesystem::path(dir) / "manifest.txt").string());
}

/// Mirrors rows (fv) and/or columns (fh).  Applying the same flags twice is
/// the identity.
template <typename T>
Tensor<T> flip_hv(const Tensor<T>& x, bool fh, bool fv) {
  if (!fh && !fv) return x;
  Tensor<T> out(x.shape);
  for (std::int64_t n = 0; n < x.shape.n; ++n) {
    for (std::int64_t c = 0; c < x.shape.c; ++c) {
      for (std::int64_t y = 0; y < x.shape.h; ++y) {
        const std::int64_t sy = fv ? x.shape.h - 1 - y : y;
        for (std::int64_t xx = 0; xx < x.shape.w; ++xx) {
          const std::int64_t sx = fh ? x.shape.w - 1 - xx : xx;
          out.at(n, c, y, xx) = x.at(n, c, sy, sx);
        }
      }
    }
  }
  return out;
}

template <typename T>
struct PatchPair {
  Tensor<T> sharp;
  Tensor<T> blur;
};

/// Draws one aligned training crop: a single uniform offset applied to both
/// images, then (when enabled) independent 50% horizontal / vertical flips
/// applied identically to both.  Draw order per call: row offset, column
/// offset, then (flips only) one u64 whose low two bits are the h/v flags.
template <typename T>
PatchPair<T> sample_patch(const Tensor<T>& sharp, const Tensor<T>& blur,
                          std::int64_t size, Rng& rng, bool flips) {
  check_same_shape(sharp, blur, "sample_patch");
  if (size < 1) throw ConfigError("patch size must be positive");
  if (size > sharp.shape.h || size > sharp.shape.w) {
    throw ConfigError("patch " + std::to_string(size) + " exceeds image " +
                      std::to_string(sharp.shape.h) + "x" + std::to_string(sharp.shape.w));
  }
  const std::int64_t y0 = static_cast<std::int64_t>(
      rng.uniform_index(static_cast<std::uint64_t>(sharp.shape.h - size + 1)));
  const std::int64_t x0 = static_cast<std::int64_t>(
      rng.uniform_index(static_cast<std::uint64_t>(sharp.shape.w - size + 1)));
  bool fh = false;
  bool fv = false;
  if (flips) {
    const std::uint64_t bits = rng.next_u64();
    fh = (bits & 1ull) != 0;
    fv = (bits & 2ull) != 0;
  }
  auto crop = [&](const Tensor<T>& img) {
    Tensor<T> out(Shape{img.shape.n, img.shape.c, size, size});
    for (std::int64_t n = 0; n < img.shape.n; ++n) {
      for (std::int64_t c = 0; c < img.shape.c; ++c) {
        for (std::int64_t y = 0; y < size; ++y) {
          for (std::int64_t x = 0; x < size; ++x) {
            out.at(n, c, y, x) = img.at(n, c, y0 + y, x0 + x);
          }
        }
      }
    }
    return out;
  };
  PatchPair<T> p{flip_hv(crop(sharp), fh, fv), flip_hv(crop(blur), fh, fv)};
  return p;
}

}  // namespace dhnet
