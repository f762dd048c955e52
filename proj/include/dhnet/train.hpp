// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dhnet/checkpoint.hpp"
#include "dhnet/dataset.hpp"
#include "dhnet/image_io.hpp"
#include "dhnet/log.hpp"
#include "dhnet/metrics.hpp"

namespace dhnet {

/// Cosine annealing from peak (step 0) to floor (final step), endpoints
/// exact.
inline double cosine_lr(std::int64_t step, std::int64_t steps, double peak,
                        double floor_) {
  if (steps <= 1) return peak;
  const double t = static_cast<double>(step) / static_cast<double>(steps - 1);
  return floor_ + 0.5 * (peak - floor_) * (1.0 + std::cos(3.14159265358979323847 * t));
}

template <typename T>
struct TrainPair {
  Tensor<T> sharp;
  Tensor<T> blur;
};

/// Loads and decodes every manifest pair up front (desk-scale datasets fit
/// in memory).  Dimension-mismatched pairs are an error here: training needs
/// aligned supervision.
template <typename T>
std::vector<TrainPair<T>> load_pairs(const DatasetManifest& m) {
  if (m.pairs.empty()) throw ConfigError("manifest lists no pairs");
  std::vector<TrainPair<T>> out;
  for (const ManifestEntry& e : m.pairs) {
    TrainPair<T> p{tensor_cast<T>(read_png(e.sharp)), tensor_cast<T>(read_png(e.blur))};
    if (!(p.sharp.shape == p.blur.shape)) {
      throw ConfigError("pair " + e.sharp + " / " + e.blur + " dimensions differ: " +
                        p.sharp.shape.str() + " vs " + p.blur.shape.str());
    }
    out.push_back(std::move(p));
  }
  return out;
}

namespace detail {

/// Forward + loss + backward for one crop; gradients land in `store`.
template <typename T>
double item_pass(DHNetParams<T>& net, const PatchPair<T>& item,
                 const LossWeights& w, LossMode mode, GradStore<T>& store) {
  Tape<T> tp(&store);
  Var<T> image = tp.constant(item.blur);
  Var<T> pred = dhnet_forward(tp, image, net);
  Var<T> target = tp.constant(item.sharp);
  Var<T> loss = total_loss(tp, pred, target, w, mode);
  const double v = static_cast<double>(tp.value(loss).data[0]);
  tp.backward(loss);
  return v;
}

}  // namespace detail

template <typename T>
struct TrainResult {
  std::vector<double> losses;      // mean per-item loss, one entry per step
  std::string checkpoint_path;
};

/// One bias-corrected Adam update over a flat tensor.  `t` is the 1-based
/// step count; moments are updated in place.  All arithmetic runs in double
/// regardless of T.
template <typename T>
void adam_apply(Tensor<T>& w, const Tensor<T>& g, Tensor<T>& m, Tensor<T>& v,
                std::int64_t t, double lr, double beta1, double beta2, double eps) {
  check_same_shape(w, g, "adam_apply");
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t j = 0; j < g.data.size(); ++j) {
    const double gj = static_cast<double>(g.data[j]);
    const double mj = beta1 * static_cast<double>(m.data[j]) + (1.0 - beta1) * gj;
    const double vj = beta2 * static_cast<double>(v.data[j]) + (1.0 - beta2) * gj * gj;
    m.data[j] = static_cast<T>(mj);
    v.data[j] = static_cast<T>(vj);
    const double upd = lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps);
    w.data[j] = static_cast<T>(static_cast<double>(w.data[j]) - upd);
  }
}

/// Runs Adam with cosine annealing and global-norm clipping from st.step to
/// cfg.train.steps.  The final state is written to `checkpoint_path`; a
/// non-finite loss or gradient aborts after writing the still-healthy
/// pre-step state to `checkpoint_path + ".abort"`.
///
/// Per-step batches are drawn from st.rng on the main thread, so the sample
/// sequence is a pure function of the checkpointed RNG state.  With
/// workers > 1 the per-item passes run concurrently into per-item gradient
/// stores that merge in item order, keeping results bitwise identical to the
/// single-worker run.
template <typename T>
TrainResult<T> train_loop(TrainState<T>& st, const std::vector<TrainPair<T>>& data,
                          const std::string& checkpoint_path) {
  st.cfg.validate();
  const TrainConfig& tc = st.cfg.train;
  if (data.empty()) throw ConfigError("no training pairs");
  for (const TrainPair<T>& p : data) {
    if (p.sharp.shape.h < tc.patch || p.sharp.shape.w < tc.patch) {
      throw ConfigError("image " + p.sharp.shape.str() + " smaller than patch " +
                        std::to_string(tc.patch));
    }
  }

  NamedParams<T> params;
  visit_params(st.net, [&](const std::string& name, Param<T>& p) {
    params.emplace_back(name, &p);
  });

  TrainResult<T> result;
  result.checkpoint_path = checkpoint_path;

  for (std::int64_t step = st.step; step < tc.steps; ++step) {
    const double lr = cosine_lr(step, tc.steps, tc.lr_peak, tc.lr_floor);

    // Sampling happens before any worker runs: one pair index draw plus the
    // patch draws per item, all on the main RNG.
    std::vector<PatchPair<T>> batch;
    batch.reserve(static_cast<std::size_t>(tc.batch));
    for (std::int64_t b = 0; b < tc.batch; ++b) {
      const std::size_t pi = static_cast<std::size_t>(
          st.rng.uniform_index(static_cast<std::uint64_t>(data.size())));
      batch.push_back(sample_patch(data[pi].sharp, data[pi].blur, tc.patch,
                                   st.rng, tc.flips));
    }

    std::vector<double> item_losses(batch.size(), 0.0);
    GradStore<T> store;
    if (tc.workers <= 1) {
      for (std::size_t i = 0; i < batch.size(); ++i) {
        item_losses[i] = detail::item_pass(st.net, batch[i], st.cfg.loss,
                                           st.cfg.loss_mode, store);
      }
    } else {
      std::vector<GradStore<T>> stores(batch.size());
      const std::size_t nw = std::min<std::size_t>(
          static_cast<std::size_t>(tc.workers), batch.size());
      std::vector<std::thread> threads;
      for (std::size_t w = 0; w < nw; ++w) {
        threads.emplace_back([&, w]() {
          for (std::size_t i = w; i < batch.size(); i += nw) {
            item_losses[i] = detail::item_pass(st.net, batch[i], st.cfg.loss,
                                               st.cfg.loss_mode, stores[i]);
          }
        });
      }
      for (std::thread& t : threads) t.join();
      for (GradStore<T>& s : stores) store.merge(s);
    }

    double loss_sum = 0.0;
    for (double v : item_losses) loss_sum += v;
    const double mean_loss = loss_sum / static_cast<double>(batch.size());

    // Mean-over-items objective: scale accumulated gradients by 1/batch,
    // then clip by global norm before the update.
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double sq_norm = 0.0;
    for (auto& [name, p] : params) {
      if (const Tensor<T>* g = store.find(p)) {
        for (T v : g->data) {
          const double gv = static_cast<double>(v) * inv_b;
          sq_norm += gv * gv;
        }
      }
    }
    const double gnorm = std::sqrt(sq_norm);

    if (!std::isfinite(mean_loss) || !std::isfinite(gnorm)) {
      save_train_state(st, checkpoint_path + ".abort");
      throw NumericError("non-finite loss at step " + std::to_string(step) +
                         "; pre-step state saved to " + checkpoint_path + ".abort");
    }

    double gscale = inv_b;
    if (tc.clip > 0.0 && gnorm > tc.clip) gscale *= tc.clip / gnorm;

    const std::int64_t t = step + 1;  // 1-based Adam time for bias correction
    for (std::size_t i = 0; i < params.size(); ++i) {
      Param<T>& p = *params[i].second;
      Tensor<T> g = store.get_or_zero(&p);
      for (T& gv : g.data) gv = static_cast<T>(static_cast<double>(gv) * gscale);
      adam_apply(p.value, g, st.adam_m[i].second, st.adam_v[i].second, t, lr,
                 tc.beta1, tc.beta2, tc.adam_eps);
    }
    st.step = step + 1;
    result.losses.push_back(mean_loss);
    if (step % tc.log_every == 0 || step + 1 == tc.steps) {
      log_info("step " + std::to_string(step) + " lr " + std::to_string(lr) +
               " loss " + std::to_string(mean_loss));
    }
  }
  save_train_state(st, checkpoint_path);
  return result;
}

/// Restores every manifest pair with the model and scores it against the
/// sharp reference.  A pair that fails to load or mismatches in size is
/// reported and skipped rather than failing the run.
template <typename T>
MetricsReport evaluate_pairs(DHNetParams<T>& net, const DatasetManifest& m) {
  MetricsReport report;
  for (const ManifestEntry& e : m.pairs) {
    try {
      const Tensor<double> sharp = read_png(e.sharp);
      const Tensor<double> blur = read_png(e.blur);
      if (!(sharp.shape == blur.shape)) {
        throw ConfigError("dimensions differ: " + sharp.shape.str() + " vs " +
                          blur.shape.str());
      }
      const Tensor<T> restored = dhnet_infer(tensor_cast<T>(blur), net);
      Tensor<double> restored_d = tensor_cast<double>(restored);
      // score in the displayable image domain, as the PNG writer would emit it
      for (auto& v : restored_d.data) v = std::clamp(v, 0.0, 1.0);
      report.psnr_db.push_back(psnr(restored_d, sharp));
      report.ssim_val.push_back(ssim(restored_d, sharp));
    } catch (const std::exception& ex) {
      log_warn("skipping pair " + e.sharp + " / " + e.blur + ": " + ex.what());
    }
  }
  return report;
}

/// Degraded-input reference point: scores blur against sharp directly.
inline MetricsReport baseline_pairs(const DatasetManifest& m) {
  MetricsReport report;
  for (const ManifestEntry& e : m.pairs) {
    try {
      const Tensor<double> sharp = read_png(e.sharp);
      const Tensor<double> blur = read_png(e.blur);
      if (!(sharp.shape == blur.shape)) {
        throw ConfigError("dimensions differ: " + sharp.shape.str() + " vs " +
                          blur.shape.str());
      }
      report.psnr_db.push_back(psnr(blur, sharp));
      report.ssim_val.push_back(ssim(blur, sharp));
    } catch (const std::exception& ex) {
      log_warn("skipping pair " + e.sharp + " / " + e.blur + ": " + ex.what());
    }
  }
  return report;
}

}  // namespace dhnet
