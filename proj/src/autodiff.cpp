#include "advnet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "advnet/kernels.hpp"

namespace advnet {
namespace ops {

template <typename T>
Var conv2d(Tape<T>& tape, Var input, Var weight, Var bias, std::size_t stride, std::size_t pad) {
  const Tensor<T>* b = bias.valid() ? &tape.value(bias) : nullptr;
  Tensor<T> out = kernels::conv2d_forward(tape.value(input), tape.value(weight), b, stride, pad);
  auto backward = [input, weight, bias, stride, pad](Tape<T>& t, const Tensor<T>& g) {
    const bool need_bias = bias.valid() && t.requires_grad(bias);
    auto grads = kernels::conv2d_backward(t.value(input), t.value(weight), g, stride, pad,
                                          t.requires_grad(input), t.requires_grad(weight),
                                          need_bias);
    if (t.requires_grad(input)) t.accumulate(input, std::move(grads.input));
    if (t.requires_grad(weight)) t.accumulate(weight, std::move(grads.weight));
    if (need_bias) t.accumulate(bias, std::move(grads.bias));
  };
  if (bias.valid()) return tape.record(std::move(out), {input, weight, bias}, backward);
  return tape.record(std::move(out), {input, weight}, backward);
}

template <typename T>
Var dense(Tape<T>& tape, Var input, Var weight, Var bias) {
  const Tensor<T>* b = bias.valid() ? &tape.value(bias) : nullptr;
  Tensor<T> out = kernels::dense_forward(tape.value(input), tape.value(weight), b);
  auto backward = [input, weight, bias](Tape<T>& t, const Tensor<T>& g) {
    const bool need_bias = bias.valid() && t.requires_grad(bias);
    auto grads = kernels::dense_backward(t.value(input), t.value(weight), g,
                                         t.requires_grad(input), t.requires_grad(weight),
                                         need_bias);
    if (t.requires_grad(input)) t.accumulate(input, std::move(grads.input));
    if (t.requires_grad(weight)) t.accumulate(weight, std::move(grads.weight));
    if (need_bias) t.accumulate(bias, std::move(grads.bias));
  };
  if (bias.valid()) return tape.record(std::move(out), {input, weight, bias}, backward);
  return tape.record(std::move(out), {input, weight}, backward);
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  const Tensor<T>& in = tape.value(x);
  Tensor<T> out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T{0} ? in[i] : T{0};
  return tape.record(std::move(out), {x}, [x](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& in = t.value(x);
    Tensor<T> dx(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) dx[i] = in[i] > T{0} ? g[i] : T{0};
    t.accumulate(x, std::move(dx));
  });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& va = tape.value(a);
  const Tensor<T>& vb = tape.value(b);
  if (va.shape() != vb.shape()) {
    throw ConfigError("add: shape " + shape_string(va.shape()) + " != " + shape_string(vb.shape()));
  }
  Tensor<T> out(va.shape());
  for (std::size_t i = 0; i < va.size(); ++i) out[i] = va[i] + vb[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& va = tape.value(a);
  const Tensor<T>& vb = tape.value(b);
  if (va.shape() != vb.shape()) {
    throw ConfigError("mul: shape " + shape_string(va.shape()) + " != " + shape_string(vb.shape()));
  }
  Tensor<T> out(va.shape());
  for (std::size_t i = 0; i < va.size(); ++i) out[i] = va[i] * vb[i];
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& va = t.value(a);
    const Tensor<T>& vb = t.value(b);
    if (t.requires_grad(a)) {
      Tensor<T> da(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * vb[i];
      t.accumulate(a, std::move(da));
    }
    if (t.requires_grad(b)) {
      Tensor<T> db(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) db[i] = g[i] * va[i];
      t.accumulate(b, std::move(db));
    }
  });
}

template <typename T>
Var scale(Tape<T>& tape, Var x, T factor) {
  const Tensor<T>& in = tape.value(x);
  Tensor<T> out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = factor * in[i];
  return tape.record(std::move(out), {x}, [x, factor](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> dx(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] = factor * g[i];
    t.accumulate(x, std::move(dx));
  });
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
  const Tensor<T>& in = tape.value(x);
  T s{0};
  for (T v : in.data()) s += v;
  return tape.record(Tensor<T>({1}, s), {x}, [x](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(x, Tensor<T>(t.value(x).shape(), g[0]));
  });
}

template <typename T>
Var global_avg_pool(Tape<T>& tape, Var x) {
  const Tensor<T>& in = tape.value(x);
  if (in.rank() != 4) throw ConfigError("global_avg_pool: expected rank 4, got " + shape_string(in.shape()));
  const std::size_t N = in.dim(0), C = in.dim(1), P = in.dim(2) * in.dim(3);
  Tensor<T> out({N, C});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const T* p = in.ptr() + (n * C + c) * P;
      T s{0};
      for (std::size_t i = 0; i < P; ++i) s += p[i];
      out[n * C + c] = s / static_cast<T>(P);
    }
  return tape.record(std::move(out), {x}, [x, N, C, P](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> dx(t.value(x).shape());
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const T v = g[n * C + c] / static_cast<T>(P);
        T* p = dx.ptr() + (n * C + c) * P;
        for (std::size_t i = 0; i < P; ++i) p[i] = v;
      }
    t.accumulate(x, std::move(dx));
  });
}

template <typename T>
Var batchnorm(Tape<T>& tape, Var x, Var gamma, Var beta, RunningStats<T>& stats, NormMode mode,
              const BatchNormSettings& settings) {
  const T eps = static_cast<T>(settings.epsilon);
  auto saved = std::make_shared<kernels::BatchNormSaved<T>>();
  Tensor<T> out;
  const bool batch_stats = mode != NormMode::Evaluation;
  if (batch_stats) {
    out = kernels::batchnorm_forward_batch(tape.value(x), tape.value(gamma), tape.value(beta), eps,
                                           *saved);
    if (mode == NormMode::Training) {
      const Tensor<T>& in = tape.value(x);
      const std::size_t per_channel = in.size() / in.dim(1);
      const double unbias =
          per_channel > 1 ? static_cast<double>(per_channel) / static_cast<double>(per_channel - 1)
                          : 1.0;
      const double keep = settings.momentum;
      for (std::size_t c = 0; c < stats.mean.size(); ++c) {
        stats.mean[c] = static_cast<T>(keep * stats.mean[c] + (1.0 - keep) * saved->mean[c]);
        stats.variance[c] =
            static_cast<T>(keep * stats.variance[c] + (1.0 - keep) * saved->variance[c] * unbias);
      }
      stats.initialized = true;
    }
  } else {
    if (!stats.initialized) throw StateError("uninitialized running statistics");
    out = kernels::batchnorm_forward_running(tape.value(x), tape.value(gamma), tape.value(beta),
                                             stats.mean, stats.variance, eps, *saved);
  }
  return tape.record(std::move(out), {x, gamma, beta},
                     [x, gamma, beta, saved, batch_stats](Tape<T>& t, const Tensor<T>& g) {
                       auto grads = kernels::batchnorm_backward(g, t.value(gamma), *saved,
                                                                batch_stats);
                       t.accumulate(x, std::move(grads.input));
                       t.accumulate(gamma, std::move(grads.gamma));
                       t.accumulate(beta, std::move(grads.beta));
                     });
}

template <typename T>
Var channel_standardize(Tape<T>& tape, Var x, const std::vector<T>& mean,
                        const std::vector<T>& stddev) {
  const Tensor<T>& in = tape.value(x);
  if (in.rank() != 4 || in.dim(1) != mean.size() || in.dim(1) != stddev.size()) {
    throw ConfigError("input " + shape_string(in.shape()) + " does not match " +
                      std::to_string(mean.size()) + " normalization channels");
  }
  const std::size_t N = in.dim(0), C = in.dim(1), P = in.dim(2) * in.dim(3);
  Tensor<T> out(in.shape());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t off = (n * C + c) * P;
      for (std::size_t i = 0; i < P; ++i) out[off + i] = (in[off + i] - mean[c]) / stddev[c];
    }
  return tape.record(std::move(out), {x}, [x, stddev, N, C, P](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> dx(g.shape());
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t off = (n * C + c) * P;
        for (std::size_t i = 0; i < P; ++i) dx[off + i] = g[off + i] / stddev[c];
      }
    t.accumulate(x, std::move(dx));
  });
}

template <typename T>
Var modulate(Tape<T>& tape, Var x, Var raw) {
  const Tensor<T>& in = tape.value(x);
  const Tensor<T>& r = tape.value(raw);
  if (in.rank() != 4 || r.rank() != 2 || r.dim(0) != in.dim(0) || r.dim(1) != 2 * in.dim(1)) {
    throw ConfigError("modulate: feature maps " + shape_string(in.shape()) +
                      " need modulation parameters of shape [" + std::to_string(in.dim(0)) + "x" +
                      std::to_string(2 * in.dim(1)) + "], got " + shape_string(r.shape()));
  }
  const std::size_t N = in.dim(0), C = in.dim(1), P = in.dim(2) * in.dim(3);
  Tensor<T> out(in.shape());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const T nu = T{1} + r[n * 2 * C + c];
      const T mu = r[n * 2 * C + C + c];
      const std::size_t off = (n * C + c) * P;
      for (std::size_t i = 0; i < P; ++i) out[off + i] = nu * in[off + i] + mu;
    }
  return tape.record(std::move(out), {x, raw}, [x, raw, N, C, P](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& in = t.value(x);
    const Tensor<T>& r = t.value(raw);
    if (t.requires_grad(x)) {
      Tensor<T> dx(in.shape());
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
          const T nu = T{1} + r[n * 2 * C + c];
          const std::size_t off = (n * C + c) * P;
          for (std::size_t i = 0; i < P; ++i) dx[off + i] = nu * g[off + i];
        }
      t.accumulate(x, std::move(dx));
    }
    if (t.requires_grad(raw)) {
      Tensor<T> dr(r.shape());
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t off = (n * C + c) * P;
          T s_scale{0}, s_shift{0};
          for (std::size_t i = 0; i < P; ++i) {
            s_scale += g[off + i] * in[off + i];
            s_shift += g[off + i];
          }
          dr[n * 2 * C + c] = s_scale;
          dr[n * 2 * C + C + c] = s_shift;
        }
      t.accumulate(raw, std::move(dr));
    }
  });
}

template <typename T>
Var softmax_cross_entropy(Tape<T>& tape, Var logits, const Tensor<T>& targets,
                          Reduction reduction) {
  const Tensor<T>& z = tape.value(logits);
  if (z.rank() != 2 || targets.shape() != z.shape()) {
    throw ConfigError("softmax_cross_entropy: logits " + shape_string(z.shape()) +
                      " and targets " + shape_string(targets.shape()) + " disagree");
  }
  const std::vector<T> per_sample = cross_entropy_per_sample(z, targets);
  T total{0};
  for (T v : per_sample) total += v;
  const std::size_t N = z.dim(0);
  const T divisor = reduction == Reduction::Mean ? static_cast<T>(N) : T{1};
  auto shared_targets = std::make_shared<const Tensor<T>>(targets);
  return tape.record(
      Tensor<T>({1}, total / divisor), {logits},
      [logits, shared_targets, divisor](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T> p = softmax(t.value(logits));
        const T s = g[0] / divisor;
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = (p[i] - (*shared_targets)[i]) * s;
        t.accumulate(logits, std::move(p));
      });
}

}  // namespace ops

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ConfigError("softmax expects N x M logits");
  const std::size_t N = logits.dim(0), M = logits.dim(1);
  Tensor<T> out(logits.shape());
  for (std::size_t n = 0; n < N; ++n) {
    const T* z = logits.ptr() + n * M;
    T* p = out.ptr() + n * M;
    const T top = *std::max_element(z, z + M);
    T total{0};
    for (std::size_t m = 0; m < M; ++m) {
      p[m] = std::exp(z[m] - top);
      total += p[m];
    }
    for (std::size_t m = 0; m < M; ++m) p[m] /= total;
  }
  return out;
}

template <typename T>
std::vector<T> cross_entropy_per_sample(const Tensor<T>& logits, const Tensor<T>& targets) {
  if (logits.rank() != 2 || targets.shape() != logits.shape()) {
    throw ConfigError("cross entropy: logits " + shape_string(logits.shape()) + " and targets " +
                      shape_string(targets.shape()) + " disagree");
  }
  const std::size_t N = logits.dim(0), M = logits.dim(1);
  std::vector<T> out(N);
  for (std::size_t n = 0; n < N; ++n) {
    const T* z = logits.ptr() + n * M;
    const T* y = targets.ptr() + n * M;
    double row = 0.0;
    for (std::size_t m = 0; m < M; ++m) row += y[m];
    if (std::abs(row - 1.0) > 1e-5) {
      throw ValidationError("target row " + std::to_string(n) + " sums to " + std::to_string(row) +
                            ", expected 1");
    }
    const T top = *std::max_element(z, z + M);
    T total{0};
    for (std::size_t m = 0; m < M; ++m) total += std::exp(z[m] - top);
    const T log_norm = top + std::log(total);
    T loss{0};
    for (std::size_t m = 0; m < M; ++m) {
      if (y[m] != T{0}) loss -= y[m] * (z[m] - log_norm);
    }
    if (!std::isfinite(loss)) throw NumericError("cross entropy of row " + std::to_string(n) + " is not finite");
    out[n] = loss;
  }
  return out;
}

template <typename T>
Tensor<T> one_hot(const std::vector<int>& labels, std::size_t classes) {
  Tensor<T> out({labels.size(), classes});
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= classes) {
      throw ValidationError("label " + std::to_string(labels[n]) + " outside [0, " +
                            std::to_string(classes) + ")");
    }
    out[n * classes + static_cast<std::size_t>(labels[n])] = T{1};
  }
  return out;
}

#define ADVNET_INSTANTIATE(T)                                                                   \
  template Var ops::conv2d(Tape<T>&, Var, Var, Var, std::size_t, std::size_t);                  \
  template Var ops::dense(Tape<T>&, Var, Var, Var);                                             \
  template Var ops::relu(Tape<T>&, Var);                                                        \
  template Var ops::add(Tape<T>&, Var, Var);                                                    \
  template Var ops::mul(Tape<T>&, Var, Var);                                                    \
  template Var ops::scale(Tape<T>&, Var, T);                                                    \
  template Var ops::sum(Tape<T>&, Var);                                                         \
  template Var ops::global_avg_pool(Tape<T>&, Var);                                             \
  template Var ops::batchnorm(Tape<T>&, Var, Var, Var, RunningStats<T>&, NormMode,              \
                              const BatchNormSettings&);                                        \
  template Var ops::channel_standardize(Tape<T>&, Var, const std::vector<T>&,                   \
                                        const std::vector<T>&);                                 \
  template Var ops::modulate(Tape<T>&, Var, Var);                                               \
  template Var ops::softmax_cross_entropy(Tape<T>&, Var, const Tensor<T>&, Reduction);          \
  template Tensor<T> softmax(const Tensor<T>&);                                                 \
  template std::vector<T> cross_entropy_per_sample(const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> one_hot(const std::vector<int>&, std::size_t);

ADVNET_INSTANTIATE(float)
ADVNET_INSTANTIATE(double)
#undef ADVNET_INSTANTIATE

}  // namespace advnet
