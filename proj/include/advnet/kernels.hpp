#pragma once

// Numeric kernels behind the differentiable primitives.
//
// Two implementations exist for the heavy operators:
//   advnet::kernels            im2col + GEMM, OpenMP-parallel over samples
//   advnet::kernels::reference direct nested loops, serial
// The reference path is what the tests compare against; the benchmark target
// times both. Parallel loops only split work whose per-element summation
// order is fixed, so results do not depend on the thread count.

#include <cstddef>
#include <vector>

#include "advnet/tensor.hpp"

namespace advnet::kernels {

struct ConvGeometry {
  std::size_t batch, in_channels, height, width;
  std::size_t out_channels, kernel, stride, pad;
  std::size_t out_height, out_width;

  // Validates shapes; throws ConfigError naming the offending dimensions.
  static ConvGeometry of(const Shape& input, const Shape& weight, std::size_t stride,
                         std::size_t pad);
  std::size_t patch() const { return in_channels * kernel * kernel; }
  std::size_t pixels() const { return out_height * out_width; }
};

template <typename T>
struct ConvGrads {
  Tensor<T> input, weight, bias;  // empty when not requested
};

template <typename T>
struct DenseGrads {
  Tensor<T> input, weight, bias;
};

// bias may be null.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias,
                         std::size_t stride, std::size_t pad);

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight,
                             const Tensor<T>& grad_out, std::size_t stride, std::size_t pad,
                             bool need_input, bool need_weight, bool need_bias);

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias);

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& input, const Tensor<T>& weight,
                             const Tensor<T>& grad_out, bool need_input, bool need_weight,
                             bool need_bias);

// Per-channel batch normalization over (N, H, W). Works for N x C and
// N x C x H x W inputs.
template <typename T>
struct BatchNormSaved {
  Tensor<T> normalized;     // x-hat
  std::vector<T> inv_std;   // per channel
  std::vector<T> mean;      // batch mean (training) or running mean
  std::vector<T> variance;  // biased batch variance (training) or running variance
};

template <typename T>
Tensor<T> batchnorm_forward_batch(const Tensor<T>& input, const Tensor<T>& gamma,
                                  const Tensor<T>& beta, T epsilon, BatchNormSaved<T>& saved);

template <typename T>
Tensor<T> batchnorm_forward_running(const Tensor<T>& input, const Tensor<T>& gamma,
                                    const Tensor<T>& beta, const Tensor<T>& running_mean,
                                    const Tensor<T>& running_var, T epsilon,
                                    BatchNormSaved<T>& saved);

template <typename T>
struct BatchNormGrads {
  Tensor<T> input, gamma, beta;
};

// batch_statistics selects the backward of the batch-statistics forward
// (gradient flows through mean and variance) versus the running-statistics
// forward (a per-channel affine map).
template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& grad_out, const Tensor<T>& gamma,
                                     const BatchNormSaved<T>& saved, bool batch_statistics);

namespace reference {

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias,
                         std::size_t stride, std::size_t pad);

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight,
                             const Tensor<T>& grad_out, std::size_t stride, std::size_t pad);

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias);

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& input, const Tensor<T>& weight,
                             const Tensor<T>& grad_out);

}  // namespace reference

// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace advnet::kernels
