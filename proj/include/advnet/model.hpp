#pragma once

// Wide residual networks (pre-activation) and the input-conditioned
// normalization module that turns them into adaptive networks.

#include <array>
#include <map>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "advnet/autodiff.hpp"
#include "advnet/parameters.hpp"
#include "advnet/tensor.hpp"

namespace advnet {

struct WrnSpec {
  int depth = 28;
  int widen = 4;
  int classes = 10;
  bool adaptive = false;
  int input_channels = 3;
  int input_size = 32;

  // Throws ConfigError naming the violated invariant.
  void validate() const;
  int blocks_per_group() const { return (depth - 4) / 6; }
  std::array<int, 3> group_widths() const { return {16 * widen, 32 * widen, 64 * widen}; }

  // "wrn-<depth>-<widen>[-adaptive]"
  std::string arch() const;
  static WrnSpec from_arch(std::string_view arch, int classes, int input_channels = 3,
                           int input_size = 32);

  friend bool operator==(const WrnSpec&, const WrnSpec&) = default;
};

struct ParameterShape {
  std::string name;
  Shape shape;
};

// Trainable parameters of a spec in registration order, without allocating.
std::vector<ParameterShape> parameter_layout(const WrnSpec& spec);
std::size_t param_count(const WrnSpec& spec);

// Tape handles for one conditional normalization module.
struct CondNormVars {
  Var conv_a_weight, conv_a_bias;
  Var conv_b_weight, conv_b_bias;
  Var out_weight, out_bias;
};

// out[n,c,h,w] = nu(z)[n,c] * x[n,c,h,w] + mu(z)[n,c] with z = x. The meta
// network is conv3x3 -> ReLU -> conv3x3 -> ReLU -> conv1x1 (2C outputs) ->
// global average pool; its raw output r splits into nu = 1 + r[:, :C] and
// mu = r[:, C:].
template <typename T>
Var cond_norm_forward(Tape<T>& tape, Var x, const CondNormVars& module);

template <typename T>
class Wrn {
 public:
  explicit Wrn(WrnSpec spec, std::uint64_t seed = 0, BatchNormSettings bn = {});

  template <typename U>
  explicit Wrn(const Wrn<U>& other);

  const WrnSpec& spec() const noexcept { return spec_; }
  const BatchNormSettings& batchnorm_settings() const noexcept { return bn_; }

  ParameterSet<T>& parameters() noexcept { return params_; }
  const ParameterSet<T>& parameters() const noexcept { return params_; }

  // Running statistics as named tensors "<layer>.running_mean" /
  // "<layer>.running_var", in registration order.
  std::vector<std::pair<std::string, Tensor<T>*>> running_tensors();
  std::vector<std::pair<std::string, const Tensor<T>*>> running_tensors() const;
  bool statistics_ready() const;
  void mark_statistics_ready(bool ready);

  // Fixed first layer: (x - mean) / std per input channel.
  const std::vector<T>& input_mean() const noexcept { return input_mean_; }
  const std::vector<T>& input_std() const noexcept { return input_std_; }
  void set_input_normalization(std::vector<T> mean, std::vector<T> stddev);

  // Registers every parameter on the tape (requiring gradients when
  // param_grads) and returns N x classes logits.
  Var forward(Tape<T>& tape, Var input, NormMode mode, bool param_grads = true);

  // Parameter leaves registered once so several forwards on one tape share
  // them and their gradients accumulate.
  using ParameterVars = std::map<std::string, Var, std::less<>>;
  ParameterVars register_parameters(Tape<T>& tape, bool requires_grad) const;
  Var forward(Tape<T>& tape, Var input, NormMode mode, const ParameterVars& params);

  // Gradient-free convenience forward.
  Tensor<T> logits(const Tensor<T>& input, NormMode mode = NormMode::Evaluation);

  std::size_t param_count() const { return params_.element_count(); }

  // Names of the meta-network parameters (empty for non-adaptive models).
  std::vector<std::string> meta_parameter_names() const;

  // Overwrites backbone parameters and running statistics with those of a
  // model sharing the same backbone (the meta-networks are left alone).
  void copy_backbone_from(const Wrn& other);

 private:
  template <typename U>
  friend class Wrn;

  struct BlockLayout {
    std::string prefix;
    std::size_t in_channels, out_channels, stride;
    bool conditional;
    bool projection;
  };

  void build_layout();
  void initialize(std::uint64_t seed);

  WrnSpec spec_;
  BatchNormSettings bn_;
  ParameterSet<T> params_;
  std::vector<std::pair<std::string, RunningStats<T>>> stats_;
  std::vector<BlockLayout> blocks_;
  std::vector<T> input_mean_;
  std::vector<T> input_std_;
};

}  // namespace advnet
