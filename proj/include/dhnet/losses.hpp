// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dhnet/ops.hpp"

namespace dhnet {

struct LossWeights {
  double eps = 1e-3;     // Charbonnier/edge stabilizer
  double delta = 0.05;   // edge weight
  double lambda = 0.1;   // frequency weight

  void validate() const {
    if (eps < 0 || delta < 0 || lambda < 0)
      throw ConfigError("loss weights must be non-negative");
  }
};

/// kPrinted keeps the literal global-norm forms, which scale with image size;
/// kNormalized divides the squared norm by the element count and uses the
/// orthonormal-transform mean in the frequency term, keeping magnitudes
/// patch-size independent for training.
enum class LossMode { kPrinted, kNormalized };

/// sqrt(‖pred − target‖² + ε²) — a smooth L2 with a floor of ε.
template <typename T>
Var<T> charbonnier(Tape<T>& tp, Var<T> pred, Var<T> target, double eps,
                   LossMode mode = LossMode::kPrinted) {
  Var<T> ss = op_sum_squares(tp, op_sub(tp, pred, target));
  if (mode == LossMode::kNormalized)
    ss = op_scale(tp, ss, 1.0 / static_cast<double>(tp.shape(pred).numel()));
  return op_sqrt_shift(tp, ss, eps * eps);
}

/// Charbonnier distance between the Laplacians of the two images.
template <typename T>
Var<T> edge_loss(Tape<T>& tp, Var<T> pred, Var<T> target, double eps,
                 LossMode mode = LossMode::kPrinted) {
  return charbonnier(tp, op_laplacian(tp, pred), op_laplacian(tp, target), eps, mode);
}

/// Sum (printed) or orthonormal mean (normalized) of the spectral magnitudes
/// of pred − target.
template <typename T>
Var<T> frequency_loss(Tape<T>& tp, Var<T> pred, Var<T> target,
                      LossMode mode = LossMode::kPrinted) {
  return op_spectrum_abs_sum(tp, op_sub(tp, pred, target),
                             mode == LossMode::kPrinted ? SpectrumNorm::kUnnormalized
                                                        : SpectrumNorm::kOrthonormal);
}

/// L_c + δ·L_e + λ·L_f.
template <typename T>
Var<T> total_loss(Tape<T>& tp, Var<T> pred, Var<T> target, const LossWeights& w,
                  LossMode mode = LossMode::kPrinted) {
  w.validate();
  Var<T> c = charbonnier(tp, pred, target, w.eps, mode);
  Var<T> e = op_scale(tp, edge_loss(tp, pred, target, w.eps, mode), w.delta);
  Var<T> f = op_scale(tp, frequency_loss(tp, pred, target, mode), w.lambda);
  return op_add(tp, op_add(tp, c, e), f);
}

/// Off-graph scalar evaluation.
template <typename T>
double total_loss_eval(const Tensor<T>& pred, const Tensor<T>& target,
                       const LossWeights& w, LossMode mode = LossMode::kPrinted) {
  Tape<T> tp;
  return static_cast<double>(
      tp.value(total_loss(tp, tp.constant(pred), tp.constant(target), w, mode)).data[0]);
}

}  // namespace dhnet
