#pragma once

// Small classifiers with hand-written gradients, used as attack oracles.

#include <cmath>
#include <vector>

#include "advnet/attacks.hpp"
#include "advnet/rng.hpp"

namespace advnet::testing {

inline std::vector<double> softmax_row(const std::vector<double>& z) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double s = 0;
  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) s += (p[i] = std::exp(z[i] - m));
  for (double& v : p) v /= s;
  return p;
}

inline double cross_entropy_row(const std::vector<double>& z, const float* target) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double s = 0;
  for (double v : z) s += std::exp(v - m);
  const double lse = m + std::log(s);
  double l = 0;
  for (std::size_t c = 0; c < z.size(); ++c) l += target[c] * (lse - z[c]);
  return l;
}

// logits = W x + b, x flattened per sample.
class LinearClassifier final : public Classifier {
 public:
  LinearClassifier(std::size_t classes, std::size_t dim, Rng& rng) : C_(classes), D_(dim), w_(classes * dim), b_(classes) {
    for (double& v : w_) v = rng.normal();
    for (double& v : b_) v = 0.1 * rng.normal();
  }
  std::vector<double>& weights() { return w_; }
  std::vector<double>& bias() { return b_; }
  std::size_t classes() const override { return C_; }

  std::vector<double> logits_row(const float* x) const {
    std::vector<double> z(b_);
    for (std::size_t c = 0; c < C_; ++c)
      for (std::size_t j = 0; j < D_; ++j) z[c] += w_[c * D_ + j] * x[j];
    return z;
  }
  Tensor<float> logits(const Tensor<float>& x) override {
    const std::size_t n = x.dim(0);
    Tensor<float> out({n, C_});
    for (std::size_t i = 0; i < n; ++i) {
      const auto z = logits_row(x.ptr() + i * D_);
      for (std::size_t c = 0; c < C_; ++c) out[i * C_ + c] = float(z[c]);
    }
    return out;
  }
  Tensor<float> input_gradient(const Tensor<float>& x, const Tensor<float>& targets,
                               std::vector<float>* losses) override {
    ++calls;
    const std::size_t n = x.dim(0);
    Tensor<float> g = Tensor<float>::zeros_like(x);
    if (losses) losses->assign(n, 0.0f);
    for (std::size_t i = 0; i < n; ++i) {
      const auto z = logits_row(x.ptr() + i * D_);
      const auto p = softmax_row(z);
      if (losses) (*losses)[i] = float(cross_entropy_row(z, targets.ptr() + i * C_));
      for (std::size_t j = 0; j < D_; ++j) {
        double acc = 0;
        for (std::size_t c = 0; c < C_; ++c) acc += (p[c] - targets[i * C_ + c]) * w_[c * D_ + j];
        g[i * D_ + j] = float(acc);
      }
    }
    last_input = x;
    return g;
  }

  int calls = 0;
  Tensor<float> last_input;

 private:
  std::size_t C_, D_;
  std::vector<double> w_, b_;
};

// One hidden ReLU layer, so sign patterns change along the attack path.
class MlpClassifier final : public Classifier {
 public:
  MlpClassifier(std::size_t classes, std::size_t dim, std::size_t hidden, Rng& rng)
      : C_(classes), D_(dim), H_(hidden), w1_(hidden * dim), w2_(classes * hidden) {
    for (double& v : w1_) v = rng.normal() / std::sqrt(double(dim));
    for (double& v : w2_) v = rng.normal();
  }
  std::size_t classes() const override { return C_; }

  void forward(const float* x, std::vector<double>& h, std::vector<double>& z) const {
    h.assign(H_, 0.0);
    z.assign(C_, 0.0);
    for (std::size_t k = 0; k < H_; ++k) {
      for (std::size_t j = 0; j < D_; ++j) h[k] += w1_[k * D_ + j] * (x[j] - 0.5);
      h[k] = std::max(0.0, h[k]);
    }
    for (std::size_t c = 0; c < C_; ++c)
      for (std::size_t k = 0; k < H_; ++k) z[c] += w2_[c * H_ + k] * h[k];
  }
  Tensor<float> logits(const Tensor<float>& x) override {
    const std::size_t n = x.dim(0);
    Tensor<float> out({n, C_});
    std::vector<double> h, z;
    for (std::size_t i = 0; i < n; ++i) {
      forward(x.ptr() + i * D_, h, z);
      for (std::size_t c = 0; c < C_; ++c) out[i * C_ + c] = float(z[c]);
    }
    return out;
  }
  Tensor<float> input_gradient(const Tensor<float>& x, const Tensor<float>& targets,
                               std::vector<float>* losses) override {
    const std::size_t n = x.dim(0);
    Tensor<float> g = Tensor<float>::zeros_like(x);
    if (losses) losses->assign(n, 0.0f);
    std::vector<double> h, z, dh(H_);
    for (std::size_t i = 0; i < n; ++i) {
      forward(x.ptr() + i * D_, h, z);
      const auto p = softmax_row(z);
      if (losses) (*losses)[i] = float(cross_entropy_row(z, targets.ptr() + i * C_));
      for (std::size_t k = 0; k < H_; ++k) {
        double acc = 0;
        for (std::size_t c = 0; c < C_; ++c) acc += (p[c] - targets[i * C_ + c]) * w2_[c * H_ + k];
        dh[k] = h[k] > 0 ? acc : 0.0;
      }
      for (std::size_t j = 0; j < D_; ++j) {
        double acc = 0;
        for (std::size_t k = 0; k < H_; ++k) acc += dh[k] * w1_[k * D_ + j];
        g[i * D_ + j] = float(acc);
      }
    }
    return g;
  }

 private:
  std::size_t C_, D_, H_;
  std::vector<double> w1_, w2_;
};

}  // namespace advnet::testing
