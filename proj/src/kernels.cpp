#define EIGEN_DONT_PARALLELIZE
#include "advnet/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace advnet::kernels {
namespace {

template <typename T>
using ColMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
template <typename T>
using MatMap = Eigen::Map<ColMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const ColMatrix<T>>;

// Fixed so that the weight-gradient summation order never depends on the
// thread count or batch size.
constexpr std::size_t kWeightGradChunk = 16;

std::string dims(const Shape& s) { return shape_string(s); }

// Writes the patch matrix of sample `n` transposed: element (p, kk) at
// out[kk * ld + row0 + p], i.e. a P x K column-major block inside a taller
// matrix with leading dimension ld.
template <typename T>
void im2col(const T* sample, const ConvGeometry& g, T* out, std::size_t ld, std::size_t row0) {
  const std::size_t k = g.kernel;
  for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
    const T* plane = sample + ci * g.height * g.width;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* col = out + ((ci * k + ky) * k + kx) * ld + row0;
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          T* dst = col + oy * g.out_width;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_width, T{0});
            continue;
          }
          const T* row = plane + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_width; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width))
                          ? T{0}
                          : row[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* sample) {
  const std::size_t k = g.kernel;
  const std::size_t ld = g.pixels();
  for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
    T* plane = sample + ci * g.height * g.width;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* col = cols + ((ci * k + ky) * k + kx) * ld;
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          T* row = plane + static_cast<std::size_t>(iy) * g.width;
          const T* src = col + oy * g.out_width;
          for (std::size_t ox = 0; ox < g.out_width; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
            row[static_cast<std::size_t>(ix)] += src[ox];
          }
        }
      }
    }
  }
}

void check_bias(const Shape& bias, std::size_t channels, const char* op) {
  if (bias.size() != 1 || bias[0] != channels) {
    throw ConfigError(std::string(op) + ": bias shape " + dims(bias) + " does not match " +
                      std::to_string(channels) + " output channels");
  }
}

struct DenseGeometry {
  std::size_t rows, in, out;
};

DenseGeometry dense_geometry(const Shape& x, const Shape& w) {
  if (x.size() != 2 || w.size() != 2 || x[1] != w[0]) {
    throw ConfigError("dense: input " + dims(x) + " incompatible with weight " + dims(w));
  }
  return {x[0], x[1], w[1]};
}

struct ChannelLayout {
  std::size_t batch, channels, spatial;
};

ChannelLayout channel_layout(const Shape& s) {
  if (s.size() == 2) return {s[0], s[1], 1};
  if (s.size() == 4) return {s[0], s[1], s[2] * s[3]};
  throw ConfigError("batchnorm: expected N x C or N x C x H x W input, got " + dims(s));
}

}  // namespace

ConvGeometry ConvGeometry::of(const Shape& input, const Shape& weight, std::size_t stride,
                              std::size_t pad) {
  if (input.size() != 4) throw ConfigError("conv2d: input must be N x C x H x W, got " + dims(input));
  if (weight.size() != 4) {
    throw ConfigError("conv2d: weight must be Cout x Cin x k x k, got " + dims(weight));
  }
  if (weight[1] != input[1]) {
    throw ConfigError("conv2d: input has " + std::to_string(input[1]) +
                      " channels but weight expects " + std::to_string(weight[1]) + " (input " +
                      dims(input) + ", weight " + dims(weight) + ")");
  }
  if (weight[2] != weight[3]) throw ConfigError("conv2d: kernel must be square, got " + dims(weight));
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  const std::size_t k = weight[2];
  if (input[2] + 2 * pad < k || input[3] + 2 * pad < k) {
    throw ConfigError("conv2d: kernel " + std::to_string(k) + " larger than padded input " +
                      dims(input));
  }
  ConvGeometry g{};
  g.batch = input[0];
  g.in_channels = input[1];
  g.height = input[2];
  g.width = input[3];
  g.out_channels = weight[0];
  g.kernel = k;
  g.stride = stride;
  g.pad = pad;
  g.out_height = (g.height + 2 * pad - k) / stride + 1;
  g.out_width = (g.width + 2 * pad - k) / stride + 1;
  return g;
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias,
                         std::size_t stride, std::size_t pad) {
  const ConvGeometry g = ConvGeometry::of(input.shape(), weight.shape(), stride, pad);
  if (bias) check_bias(bias->shape(), g.out_channels, "conv2d");
  Tensor<T> out({g.batch, g.out_channels, g.out_height, g.out_width});
  const std::size_t P = g.pixels(), K = g.patch(), C = g.out_channels;
  const std::size_t in_stride = g.in_channels * g.height * g.width;
  ConstMatMap<T> wt(weight.ptr(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(C));

#pragma omp parallel
  {
    std::vector<T> cols(P * K);
#pragma omp for schedule(static)
    for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(g.batch); ++n) {
      im2col(input.ptr() + static_cast<std::size_t>(n) * in_stride, g, cols.data(), P, 0);
      ConstMatMap<T> colst(cols.data(), static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(K));
      MatMap<T> yt(out.ptr() + static_cast<std::size_t>(n) * C * P, static_cast<Eigen::Index>(P),
                   static_cast<Eigen::Index>(C));
      yt.noalias() = colst * wt;
      if (bias) {
        for (std::size_t c = 0; c < C; ++c) {
          T* y = out.ptr() + (static_cast<std::size_t>(n) * C + c) * P;
          const T b = (*bias)[c];
          for (std::size_t p = 0; p < P; ++p) y[p] += b;
        }
      }
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight,
                             const Tensor<T>& grad_out, std::size_t stride, std::size_t pad,
                             bool need_input, bool need_weight, bool need_bias) {
  const ConvGeometry g = ConvGeometry::of(input.shape(), weight.shape(), stride, pad);
  const Shape expected{g.batch, g.out_channels, g.out_height, g.out_width};
  if (grad_out.shape() != expected) {
    throw ConfigError("conv2d backward: gradient " + dims(grad_out.shape()) + " != output " +
                      dims(expected));
  }
  const std::size_t P = g.pixels(), K = g.patch(), C = g.out_channels;
  const std::size_t in_stride = g.in_channels * g.height * g.width;
  ConvGrads<T> grads;

  if (need_input) {
    grads.input = Tensor<T>(input.shape());
    ConstMatMap<T> wt(weight.ptr(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(C));
#pragma omp parallel
    {
      std::vector<T> dcols(P * K);
#pragma omp for schedule(static)
      for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(g.batch); ++n) {
        ConstMatMap<T> dyt(grad_out.ptr() + static_cast<std::size_t>(n) * C * P,
                           static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(C));
        MatMap<T> dcolst(dcols.data(), static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(K));
        dcolst.noalias() = dyt * wt.transpose();
        col2im(dcols.data(), g, grads.input.ptr() + static_cast<std::size_t>(n) * in_stride);
      }
    }
  }

  if (need_weight) {
    grads.weight = Tensor<T>(weight.shape());
    MatMap<T> dwt(grads.weight.ptr(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(C));
    const std::size_t chunk = std::min(kWeightGradChunk, g.batch);
    std::vector<T> cols(chunk * P * K);
    std::vector<T> dys(chunk * P * C);
    for (std::size_t n0 = 0; n0 < g.batch; n0 += chunk) {
      const std::size_t count = std::min(chunk, g.batch - n0);
      const std::size_t ld = count * P;
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(count); ++j) {
        const std::size_t n = n0 + static_cast<std::size_t>(j);
        im2col(input.ptr() + n * in_stride, g, cols.data(), ld, static_cast<std::size_t>(j) * P);
        for (std::size_t c = 0; c < C; ++c) {
          const T* src = grad_out.ptr() + (n * C + c) * P;
          std::copy(src, src + P, dys.data() + c * ld + static_cast<std::size_t>(j) * P);
        }
      }
      ConstMatMap<T> colst(cols.data(), static_cast<Eigen::Index>(ld), static_cast<Eigen::Index>(K));
      ConstMatMap<T> dyt(dys.data(), static_cast<Eigen::Index>(ld), static_cast<Eigen::Index>(C));
      dwt.noalias() += colst.transpose() * dyt;
    }
  }

  if (need_bias) {
    grads.bias = Tensor<T>({C});
    for (std::size_t n = 0; n < g.batch; ++n) {
      for (std::size_t c = 0; c < C; ++c) {
        const T* dy = grad_out.ptr() + (n * C + c) * P;
        T s{0};
        for (std::size_t p = 0; p < P; ++p) s += dy[p];
        grads.bias[c] += s;
      }
    }
  }
  return grads;
}

// Dense layers are small (classifier heads); explicit loops keep every output
// row independent of the batch composition.
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias) {
  const DenseGeometry d = dense_geometry(input.shape(), weight.shape());
  if (bias) check_bias(bias->shape(), d.out, "dense");
  Tensor<T> out({d.rows, d.out});
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(d.rows); ++n) {
    T* y = out.ptr() + static_cast<std::size_t>(n) * d.out;
    const T* x = input.ptr() + static_cast<std::size_t>(n) * d.in;
    for (std::size_t i = 0; i < d.in; ++i) {
      const T xi = x[i];
      const T* w = weight.ptr() + i * d.out;
      for (std::size_t m = 0; m < d.out; ++m) y[m] += xi * w[m];
    }
    if (bias) {
      for (std::size_t m = 0; m < d.out; ++m) y[m] += (*bias)[m];
    }
  }
  return out;
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& input, const Tensor<T>& weight,
                             const Tensor<T>& grad_out, bool need_input, bool need_weight,
                             bool need_bias) {
  const DenseGeometry d = dense_geometry(input.shape(), weight.shape());
  if (grad_out.shape() != Shape{d.rows, d.out}) {
    throw ConfigError("dense backward: gradient " + dims(grad_out.shape()) + " mismatch");
  }
  DenseGrads<T> g;
  if (need_input) {
    g.input = Tensor<T>(input.shape());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(d.rows); ++n) {
      const T* dy = grad_out.ptr() + static_cast<std::size_t>(n) * d.out;
      T* dx = g.input.ptr() + static_cast<std::size_t>(n) * d.in;
      for (std::size_t i = 0; i < d.in; ++i) {
        const T* w = weight.ptr() + i * d.out;
        T s{0};
        for (std::size_t m = 0; m < d.out; ++m) s += dy[m] * w[m];
        dx[i] = s;
      }
    }
  }
  if (need_weight) {
    g.weight = Tensor<T>(weight.shape());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(d.in); ++i) {
      T* dw = g.weight.ptr() + static_cast<std::size_t>(i) * d.out;
      for (std::size_t n = 0; n < d.rows; ++n) {
        const T xi = input[n * d.in + static_cast<std::size_t>(i)];
        const T* dy = grad_out.ptr() + n * d.out;
        for (std::size_t m = 0; m < d.out; ++m) dw[m] += xi * dy[m];
      }
    }
  }
  if (need_bias) {
    g.bias = Tensor<T>({d.out});
    for (std::size_t n = 0; n < d.rows; ++n) {
      for (std::size_t m = 0; m < d.out; ++m) g.bias[m] += grad_out[n * d.out + m];
    }
  }
  return g;
}

template <typename T>
Tensor<T> batchnorm_forward_batch(const Tensor<T>& input, const Tensor<T>& gamma,
                                  const Tensor<T>& beta, T epsilon, BatchNormSaved<T>& saved) {
  const ChannelLayout l = channel_layout(input.shape());
  if (gamma.size() != l.channels || beta.size() != l.channels) {
    throw ConfigError("batchnorm: affine parameters do not match " + std::to_string(l.channels) +
                      " channels");
  }
  const std::size_t count = l.batch * l.spatial;
  Tensor<T> out(input.shape());
  saved.normalized = Tensor<T>(input.shape());
  saved.inv_std.assign(l.channels, T{0});
  saved.mean.assign(l.channels, T{0});
  saved.variance.assign(l.channels, T{0});
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(l.channels); ++ci) {
    const std::size_t c = static_cast<std::size_t>(ci);
    double sum = 0.0;
    for (std::size_t n = 0; n < l.batch; ++n) {
      const T* x = input.ptr() + (n * l.channels + c) * l.spatial;
      for (std::size_t s = 0; s < l.spatial; ++s) sum += x[s];
    }
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t n = 0; n < l.batch; ++n) {
      const T* x = input.ptr() + (n * l.channels + c) * l.spatial;
      for (std::size_t s = 0; s < l.spatial; ++s) {
        const double d = x[s] - mean;
        sq += d * d;
      }
    }
    const double var = sq / static_cast<double>(count);
    const T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(epsilon)));
    const T m = static_cast<T>(mean);
    saved.mean[c] = m;
    saved.variance[c] = static_cast<T>(var);
    saved.inv_std[c] = inv;
    for (std::size_t n = 0; n < l.batch; ++n) {
      const std::size_t off = (n * l.channels + c) * l.spatial;
      for (std::size_t s = 0; s < l.spatial; ++s) {
        const T xh = (input[off + s] - m) * inv;
        saved.normalized[off + s] = xh;
        out[off + s] = gamma[c] * xh + beta[c];
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> batchnorm_forward_running(const Tensor<T>& input, const Tensor<T>& gamma,
                                    const Tensor<T>& beta, const Tensor<T>& running_mean,
                                    const Tensor<T>& running_var, T epsilon,
                                    BatchNormSaved<T>& saved) {
  const ChannelLayout l = channel_layout(input.shape());
  if (gamma.size() != l.channels || beta.size() != l.channels ||
      running_mean.size() != l.channels || running_var.size() != l.channels) {
    throw ConfigError("batchnorm: parameters do not match " + std::to_string(l.channels) +
                      " channels");
  }
  Tensor<T> out(input.shape());
  saved.normalized = Tensor<T>(input.shape());
  saved.inv_std.assign(l.channels, T{0});
  saved.mean.assign(running_mean.data().begin(), running_mean.data().end());
  saved.variance.assign(running_var.data().begin(), running_var.data().end());
  for (std::size_t c = 0; c < l.channels; ++c) {
    saved.inv_std[c] = static_cast<T>(
        1.0 / std::sqrt(static_cast<double>(running_var[c]) + static_cast<double>(epsilon)));
  }
  for (std::size_t n = 0; n < l.batch; ++n) {
    for (std::size_t c = 0; c < l.channels; ++c) {
      const std::size_t off = (n * l.channels + c) * l.spatial;
      const T m = running_mean[c], inv = saved.inv_std[c];
      for (std::size_t s = 0; s < l.spatial; ++s) {
        const T xh = (input[off + s] - m) * inv;
        saved.normalized[off + s] = xh;
        out[off + s] = gamma[c] * xh + beta[c];
      }
    }
  }
  return out;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& grad_out, const Tensor<T>& gamma,
                                     const BatchNormSaved<T>& saved, bool batch_statistics) {
  const ChannelLayout l = channel_layout(grad_out.shape());
  BatchNormGrads<T> g{Tensor<T>(grad_out.shape()), Tensor<T>({l.channels}),
                      Tensor<T>({l.channels})};
  const T count = static_cast<T>(l.batch * l.spatial);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(l.channels); ++ci) {
    const std::size_t c = static_cast<std::size_t>(ci);
    T sum_dy{0}, sum_dy_xh{0};
    for (std::size_t n = 0; n < l.batch; ++n) {
      const std::size_t off = (n * l.channels + c) * l.spatial;
      for (std::size_t s = 0; s < l.spatial; ++s) {
        sum_dy += grad_out[off + s];
        sum_dy_xh += grad_out[off + s] * saved.normalized[off + s];
      }
    }
    g.gamma[c] = sum_dy_xh;
    g.beta[c] = sum_dy;
    const T scale = gamma[c] * saved.inv_std[c];
    for (std::size_t n = 0; n < l.batch; ++n) {
      const std::size_t off = (n * l.channels + c) * l.spatial;
      for (std::size_t s = 0; s < l.spatial; ++s) {
        if (batch_statistics) {
          g.input[off + s] = scale / count *
                             (count * grad_out[off + s] - sum_dy -
                              saved.normalized[off + s] * sum_dy_xh);
        } else {
          g.input[off + s] = scale * grad_out[off + s];
        }
      }
    }
  }
  return g;
}

namespace reference {

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias,
                         std::size_t stride, std::size_t pad) {
  const ConvGeometry g = ConvGeometry::of(input.shape(), weight.shape(), stride, pad);
  if (bias) check_bias(bias->shape(), g.out_channels, "conv2d");
  Tensor<T> out({g.batch, g.out_channels, g.out_height, g.out_width});
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t co = 0; co < g.out_channels; ++co)
      for (std::size_t oy = 0; oy < g.out_height; ++oy)
        for (std::size_t ox = 0; ox < g.out_width; ++ox) {
          T acc = bias ? (*bias)[co] : T{0};
          for (std::size_t ci = 0; ci < g.in_channels; ++ci)
            for (std::size_t ky = 0; ky < g.kernel; ++ky)
              for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                          static_cast<std::ptrdiff_t>(g.pad);
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                          static_cast<std::ptrdiff_t>(g.pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.height) ||
                    ix >= static_cast<std::ptrdiff_t>(g.width))
                  continue;
                acc += input.at(n, ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) *
                       weight.at(co, ci, ky, kx);
              }
          out.at(n, co, oy, ox) = acc;
        }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight,
                             const Tensor<T>& grad_out, std::size_t stride, std::size_t pad) {
  const ConvGeometry g = ConvGeometry::of(input.shape(), weight.shape(), stride, pad);
  ConvGrads<T> grads{Tensor<T>(input.shape()), Tensor<T>(weight.shape()),
                     Tensor<T>({g.out_channels})};
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t co = 0; co < g.out_channels; ++co)
      for (std::size_t oy = 0; oy < g.out_height; ++oy)
        for (std::size_t ox = 0; ox < g.out_width; ++ox) {
          const T dy = grad_out.at(n, co, oy, ox);
          grads.bias[co] += dy;
          for (std::size_t ci = 0; ci < g.in_channels; ++ci)
            for (std::size_t ky = 0; ky < g.kernel; ++ky)
              for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                          static_cast<std::ptrdiff_t>(g.pad);
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                          static_cast<std::ptrdiff_t>(g.pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.height) ||
                    ix >= static_cast<std::ptrdiff_t>(g.width))
                  continue;
                const auto uy = static_cast<std::size_t>(iy), ux = static_cast<std::size_t>(ix);
                grads.input.at(n, ci, uy, ux) += dy * weight.at(co, ci, ky, kx);
                grads.weight.at(co, ci, ky, kx) += dy * input.at(n, ci, uy, ux);
              }
        }
  return grads;
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias) {
  const DenseGeometry d = dense_geometry(input.shape(), weight.shape());
  Tensor<T> out({d.rows, d.out});
  for (std::size_t n = 0; n < d.rows; ++n)
    for (std::size_t m = 0; m < d.out; ++m) {
      T acc = bias ? (*bias)[m] : T{0};
      for (std::size_t i = 0; i < d.in; ++i) acc += input[n * d.in + i] * weight[i * d.out + m];
      out[n * d.out + m] = acc;
    }
  return out;
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& input, const Tensor<T>& weight,
                             const Tensor<T>& grad_out) {
  const DenseGeometry d = dense_geometry(input.shape(), weight.shape());
  DenseGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(weight.shape()), Tensor<T>({d.out})};
  for (std::size_t n = 0; n < d.rows; ++n)
    for (std::size_t m = 0; m < d.out; ++m) {
      const T dy = grad_out[n * d.out + m];
      g.bias[m] += dy;
      for (std::size_t i = 0; i < d.in; ++i) {
        g.input[n * d.in + i] += dy * weight[i * d.out + m];
        g.weight[i * d.out + m] += dy * input[n * d.in + i];
      }
    }
  return g;
}

}  // namespace reference

#define ADVNET_INSTANTIATE(T)                                                                    \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,        \
                                    std::size_t, std::size_t);                                   \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                        std::size_t, std::size_t, bool, bool, bool);             \
  template Tensor<T> dense_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*);        \
  template DenseGrads<T> dense_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                        bool, bool, bool);                                       \
  template Tensor<T> batchnorm_forward_batch(const Tensor<T>&, const Tensor<T>&,                 \
                                             const Tensor<T>&, T, BatchNormSaved<T>&);           \
  template Tensor<T> batchnorm_forward_running(const Tensor<T>&, const Tensor<T>&,               \
                                               const Tensor<T>&, const Tensor<T>&,               \
                                               const Tensor<T>&, T, BatchNormSaved<T>&);         \
  template BatchNormGrads<T> batchnorm_backward(const Tensor<T>&, const Tensor<T>&,              \
                                                const BatchNormSaved<T>&, bool);                 \
  template Tensor<T> reference::conv2d_forward(const Tensor<T>&, const Tensor<T>&,               \
                                               const Tensor<T>*, std::size_t, std::size_t);      \
  template ConvGrads<T> reference::conv2d_backward(const Tensor<T>&, const Tensor<T>&,           \
                                                   const Tensor<T>&, std::size_t, std::size_t);  \
  template Tensor<T> reference::dense_forward(const Tensor<T>&, const Tensor<T>&,                \
                                              const Tensor<T>*);                                 \
  template DenseGrads<T> reference::dense_backward(const Tensor<T>&, const Tensor<T>&,           \
                                                   const Tensor<T>&);

ADVNET_INSTANTIATE(float)
ADVNET_INSTANTIATE(double)
#undef ADVNET_INSTANTIATE

}  // namespace advnet::kernels
