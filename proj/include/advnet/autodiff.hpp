#pragma once

// Tape-based reverse-mode differentiation over Tensor values.
//
// A Tape records every primitive application in forward order. backward()
// replays the records in exact reverse order, summing partial gradients into
// each consumed value, and returns the gradients of all named leaves that
// were marked as requiring one (parameters, inputs, perturbations). A tape
// is single-use and must stay on the thread that created it.

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "advnet/tensor.hpp"

namespace advnet {

struct Var {
  static constexpr std::uint32_t kInvalid = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t id = kInvalid;
  bool valid() const noexcept { return id != kInvalid; }
};

template <typename T>
using GradientMap = std::map<std::string, Tensor<T>>;

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  // Named leaf. Gradients are reported under `name` when requires_grad.
  Var leaf(std::string name, Tensor<T> value, bool requires_grad = true) {
    ensure_open();
    nodes_.push_back(Node{std::move(value), {}, std::move(name), requires_grad, true, {}});
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  Var constant(Tensor<T> value) { return leaf({}, std::move(value), false); }

  // Records a primitive. `backward` receives the accumulated output gradient
  // and must route partial gradients to its operands through accumulate().
  Var record(Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn backward) {
    ensure_open();
    if (!value.all_finite()) throw NumericError("primitive produced a non-finite value");
    bool needs = false;
    for (Var v : inputs) needs = needs || requires_grad(v);
    nodes_.push_back(Node{std::move(value), {}, {}, needs, false,
                          needs ? std::move(backward) : BackwardFn{}});
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  const Tensor<T>& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool consumed() const noexcept { return consumed_; }

  void accumulate(Var v, Tensor<T> grad) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    if (n.grad.empty()) {
      n.grad = std::move(grad);
      return;
    }
    if (grad.shape() != n.grad.shape()) {
      throw ConfigError("gradient shape " + shape_string(grad.shape()) + " != " +
                        shape_string(n.grad.shape()));
    }
    T* dst = n.grad.ptr();
    const T* src = grad.ptr();
    for (std::size_t i = 0; i < n.grad.size(); ++i) dst[i] += src[i];
  }

  // Seeds d(loss)/d(loss) = 1 and returns gradients for every named leaf that
  // requires one. Leaves the loss does not depend on get zero tensors.
  GradientMap<T> backward(Var loss) {
    if (consumed_) throw UsageError("backward called twice on the same tape");
    const Node& l = node(loss);
    if (l.value.size() != 1) {
      throw UsageError("backward requires a scalar loss, got shape " +
                       shape_string(l.value.shape()));
    }
    consumed_ = true;
    nodes_[loss.id].grad = Tensor<T>(l.value.shape(), T{1});
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (n.leaf || n.grad.empty() || !n.backward) continue;
      Tensor<T> g = std::move(n.grad);
      n.grad = Tensor<T>();
      n.backward(*this, g);
      n.backward = nullptr;
    }
    GradientMap<T> out;
    for (Node& n : nodes_) {
      if (!n.leaf || !n.requires_grad || n.name.empty()) continue;
      Tensor<T> g = n.grad.empty() ? Tensor<T>::zeros_like(n.value) : std::move(n.grad);
      auto [it, inserted] = out.emplace(n.name, std::move(g));
      if (!inserted) throw UsageError("duplicate leaf name '" + n.name + "' on tape");
    }
    return out;
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::string name;
    bool requires_grad;
    bool leaf;
    BackwardFn backward;
  };

  void ensure_open() const {
    if (consumed_) throw UsageError("tape already consumed by backward");
  }
  Node& node(Var v) {
    if (v.id >= nodes_.size()) throw UsageError("variable does not belong to this tape");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw UsageError("variable does not belong to this tape");
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Running statistics of one batch-normalization layer.
template <typename T>
struct RunningStats {
  Tensor<T> mean;
  Tensor<T> variance;
  bool initialized = false;

  explicit RunningStats(std::size_t channels = 1)
      : mean({channels}, T{0}), variance({channels}, T{1}) {}
};

// Training: batch statistics, running statistics updated.
// BatchStatistics: batch statistics, running statistics untouched (used for
//   attack passes inside training loops and for gradient checks).
// Evaluation: running statistics only.
enum class NormMode { Training, BatchStatistics, Evaluation };

struct BatchNormSettings {
  double epsilon = 1e-5;
  double momentum = 0.9;  // weight kept on the old running value
};

enum class Reduction { Mean, Sum };

namespace ops {

template <typename T>
Var conv2d(Tape<T>& tape, Var input, Var weight, Var bias, std::size_t stride, std::size_t pad);

// bias may be an invalid Var (no bias).
template <typename T>
Var dense(Tape<T>& tape, Var input, Var weight, Var bias);

template <typename T>
Var relu(Tape<T>& tape, Var x);

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b);

template <typename T>
Var scale(Tape<T>& tape, Var x, T factor);

template <typename T>
Var sum(Tape<T>& tape, Var x);

// N x C x H x W -> N x C.
template <typename T>
Var global_avg_pool(Tape<T>& tape, Var x);

template <typename T>
Var batchnorm(Tape<T>& tape, Var x, Var gamma, Var beta, RunningStats<T>& stats, NormMode mode,
              const BatchNormSettings& settings);

// Fixed per-channel (x - mean) / std; not differentiable w.r.t. mean/std.
template <typename T>
Var channel_standardize(Tape<T>& tape, Var x, const std::vector<T>& mean,
                        const std::vector<T>& stddev);

// Input-conditioned modulation. x is N x C x H x W and raw is N x 2C; the
// first C columns are the scale offset r_nu and the last C the shift, so
// out[n,c,h,w] = (1 + r_nu[n,c]) * x[n,c,h,w] + r_mu[n,c].
template <typename T>
Var modulate(Tape<T>& tape, Var x, Var raw);

// Mean (or sum) over the batch of -sum_m target * log softmax(logits).
// Target rows must be distributions (sum 1 within 1e-5).
template <typename T>
Var softmax_cross_entropy(Tape<T>& tape, Var logits, const Tensor<T>& targets,
                          Reduction reduction = Reduction::Mean);

}  // namespace ops

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

// Per-row cross-entropy against distribution targets, no reduction.
template <typename T>
std::vector<T> cross_entropy_per_sample(const Tensor<T>& logits, const Tensor<T>& targets);

template <typename T>
Tensor<T> one_hot(const std::vector<int>& labels, std::size_t classes);

}  // namespace advnet
