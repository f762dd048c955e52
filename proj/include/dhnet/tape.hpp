// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dhnet/errors.hpp"
#include "dhnet/tensor.hpp"

namespace dhnet {

/// A learnable tensor.  Identity (the address of the Param) is what ties
/// gradient accumulation, optimizer state and checkpoints together, so Params
/// live inside the model structs and are never copied during training.
template <typename T>
struct Param {
  Tensor<T> value;

  Param() = default;
  explicit Param(Shape s) : value(s) {}
  explicit Param(Tensor<T> v) : value(std::move(v)) {}
};

/// Accumulates parameter gradients outside the tape, keyed by Param address.
/// Each worker owns one store; stores merge by canonical parameter order, so
/// the result is bitwise independent of how work was split.
template <typename T>
class GradStore {
 public:
  void accumulate(const Param<T>* p, const Tensor<T>& g) {
    auto it = grads_.find(p);
    if (it == grads_.end()) {
      grads_.emplace(p, g);
    } else {
      check_same_shape(it->second, g, "GradStore::accumulate");
      for (std::size_t i = 0; i < g.data.size(); ++i) it->second.data[i] += g.data[i];
    }
  }

  const Tensor<T>* find(const Param<T>* p) const {
    auto it = grads_.find(p);
    return it == grads_.end() ? nullptr : &it->second;
  }

  /// Gradient for p, or zeros of the parameter's shape if p never
  /// participated in the graph.
  Tensor<T> get_or_zero(const Param<T>* p) const {
    if (const Tensor<T>* g = find(p)) return *g;
    return Tensor<T>(p->value.shape);
  }

  void clear() { grads_.clear(); }
  std::size_t size() const { return grads_.size(); }

  /// Fold `other` into this store.  Ordering of the fold across params is
  /// immaterial because each param's partial sums are added pairwise.
  void merge(const GradStore& other) {
    for (const auto& [p, g] : other.grads_) accumulate(p, g);
  }

 private:
  std::unordered_map<const Param<T>*, Tensor<T>> grads_;
};

/// Structural tag for every tape node.  The graph is inspectable after the
/// fact, which is how the no-pointwise-nonlinearity property of the filtering
/// blocks is asserted as a structural fact rather than a code-review claim.
enum class OpKind : std::uint8_t {
  kLeafParam,
  kLeafInput,
  kLeafConst,
  kConv2d,
  kLayerNorm,
  kGlobalAvgPool,
  kPixelShuffle,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddScalar,
  kScaleChannels,
  kConcatChannels,
  kSoftmaxChannels,
  kWeightedMix,
  kLaplacian,
  kSpectrumAbsSum,
  kSumSquares,
  kSum,
  kSqrtShift,
  kRelu,
  kSigmoid,
  kTanh,
};

/// True for ops that apply a nonlinear scalar function elementwise.
inline bool is_pointwise_nonlinear(OpKind k) {
  return k == OpKind::kRelu || k == OpKind::kSigmoid || k == OpKind::kTanh;
}

inline const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::kLeafParam: return "leaf_param";
    case OpKind::kLeafInput: return "leaf_input";
    case OpKind::kLeafConst: return "leaf_const";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kLayerNorm: return "layer_norm";
    case OpKind::kGlobalAvgPool: return "global_avg_pool";
    case OpKind::kPixelShuffle: return "pixel_shuffle";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kScaleChannels: return "scale_channels";
    case OpKind::kConcatChannels: return "concat_channels";
    case OpKind::kSoftmaxChannels: return "softmax_channels";
    case OpKind::kWeightedMix: return "weighted_mix";
    case OpKind::kLaplacian: return "laplacian";
    case OpKind::kSpectrumAbsSum: return "spectrum_abs_sum";
    case OpKind::kSumSquares: return "sum_squares";
    case OpKind::kSum: return "sum";
    case OpKind::kSqrtShift: return "sqrt_shift";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
  }
  return "?";
}

template <typename T>
class Tape;

/// Handle to a tape node.  Cheap to copy; only valid for the tape that
/// produced it.
template <typename T>
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

template <typename T>
class Tape {
 public:
  using BackFn = std::function<void(Tape&, std::int32_t)>;

  explicit Tape(GradStore<T>* store = nullptr, bool checked = false)
      : store_(store), checked_(checked) {}

  bool checked() const { return checked_; }

  Var<T> param(const Param<T>& p) {
    std::int32_t id = add_node(OpKind::kLeafParam, p.value, {}, nullptr);
    nodes_[id].param = &p;
    return Var<T>{id};
  }

  /// Leaf whose gradient is retained on the tape (read back via grad()).
  Var<T> input(Tensor<T> v) {
    return Var<T>{add_node(OpKind::kLeafInput, std::move(v), {}, nullptr)};
  }

  /// Leaf that never needs a gradient (targets, frozen features, ...).
  Var<T> constant(Tensor<T> v) {
    return Var<T>{add_node(OpKind::kLeafConst, std::move(v), {}, nullptr)};
  }

  const Tensor<T>& value(Var<T> v) const { return node(v.id).value; }
  const Shape& shape(Var<T> v) const { return node(v.id).value.shape; }
  OpKind kind(Var<T> v) const { return node(v.id).kind; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Gradient of the last backward() root w.r.t. this node.  Zeros if the
  /// node did not influence the root.
  const Tensor<T>& grad(Var<T> v) {
    Node& nd = node_mut(v.id);
    if (nd.grad.shape.numel() == 0) nd.grad = Tensor<T>(nd.value.shape);
    return nd.grad;
  }

  /// Reverse sweep from a scalar root; seeds d(root)/d(root) = 1, walks the
  /// tape in reverse creation order, and flushes parameter-leaf gradients to
  /// the GradStore.
  void backward(Var<T> root) {
    Node& r = node_mut(root.id);
    if (r.value.numel() != 1)
      throw ConfigError("backward: root must be scalar, got " + r.value.shape.str());
    for (Node& nd : nodes_) nd.grad = Tensor<T>();
    grad_buffer(root.id).data[0] = T(1);
    for (std::int32_t id = root.id; id >= 0; --id) {
      Node& nd = nodes_[id];
      if (nd.grad.shape.numel() == 0) continue;  // never reached from root
      if (checked_ && !nd.grad.all_finite())
        throw NumericError(std::string("non-finite gradient at node ") +
                           op_kind_name(nd.kind));
      if (nd.back) nd.back(*this, id);
      if (nd.param != nullptr && store_ != nullptr) store_->accumulate(nd.param, nd.grad);
    }
  }

  /// Low-level node emission, used by the op layer.
  Var<T> emit(OpKind k, Tensor<T> value, std::vector<std::int32_t> parents, BackFn back) {
    if (checked_ && !value.all_finite())
      throw NumericError(std::string("non-finite value produced by ") + op_kind_name(k));
    return Var<T>{add_node(k, std::move(value), std::move(parents), std::move(back))};
  }

  /// Gradient accumulator for a node, allocated (zero) on first use.
  Tensor<T>& grad_buffer(std::int32_t id) {
    Node& nd = node_mut(id);
    if (nd.grad.shape.numel() == 0) nd.grad = Tensor<T>(nd.value.shape);
    return nd.grad;
  }

  const std::vector<std::int32_t>& parents(std::int32_t id) const {
    return node(id).parents;
  }
  const Tensor<T>& value_of(std::int32_t id) const { return node(id).value; }

  /// Kinds of every node that can influence `root` (root included).
  std::vector<OpKind> ancestor_kinds(Var<T> root) const {
    std::vector<bool> seen(nodes_.size(), false);
    std::vector<std::int32_t> stack{root.id};
    seen[root.id] = true;
    std::vector<OpKind> out;
    while (!stack.empty()) {
      std::int32_t id = stack.back();
      stack.pop_back();
      out.push_back(nodes_[id].kind);
      for (std::int32_t p : nodes_[id].parents)
        if (!seen[p]) {
          seen[p] = true;
          stack.push_back(p);
        }
    }
    return out;
  }

  std::int64_t count_ancestors(Var<T> root, OpKind k) const {
    std::int64_t n = 0;
    for (OpKind a : ancestor_kinds(root))
      if (a == k) ++n;
    return n;
  }

  std::int64_t count_pointwise_nonlinear(Var<T> root) const {
    std::int64_t n = 0;
    for (OpKind a : ancestor_kinds(root))
      if (is_pointwise_nonlinear(a)) ++n;
    return n;
  }

 private:
  struct Node {
    OpKind kind;
    Tensor<T> value;
    Tensor<T> grad;  // empty until touched by backward
    std::vector<std::int32_t> parents;
    BackFn back;
    const Param<T>* param = nullptr;
  };

  const Node& node(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
      throw ConfigError("tape: invalid node id");
    return nodes_[static_cast<std::size_t>(id)];
  }
  Node& node_mut(std::int32_t id) {
    return const_cast<Node&>(node(id));
  }

  std::int32_t add_node(OpKind k, Tensor<T> value, std::vector<std::int32_t> parents,
                        BackFn back) {
    for (std::int32_t p : parents)
      if (p < 0 || static_cast<std::size_t>(p) >= nodes_.size())
        throw ConfigError("tape: op references foreign node");
    Node nd;
    nd.kind = k;
    nd.value = std::move(value);
    nd.parents = std::move(parents);
    nd.back = std::move(back);
    nodes_.push_back(std::move(nd));
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  GradStore<T>* store_;
  bool checked_;
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace dhnet
