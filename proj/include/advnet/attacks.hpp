#pragma once

// l-infinity perturbation generators operating in raw pixel space [0, 1].
// Budgets are given in 0-255 pixel levels and divided by 255 internally.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "advnet/autodiff.hpp"
#include "advnet/model.hpp"
#include "advnet/tensor.hpp"

namespace advnet {

enum class AttackFamily { Fgsm, RfgsmClassical, RfgsmProposed, Bim, Pgd };

std::string_view family_token(AttackFamily family);

struct AttackConfig {
  AttackFamily family = AttackFamily::Pgd;
  double eps = 8.0;
  double step = 2.0;
  int iters = 20;
  std::optional<double> sigma;  // proposed RFGSM; defaults to 2 * eps
  bool random_init = true;
  bool pixel_clamp = true;
  std::uint64_t seed = 0;
  int restarts = 1;

  // Family defaults: fgsm (K=1, step=eps, no init), rfgsm (K=1, step=eps,
  // uniform init), rfgsm+ (K=1, step=eps, Gaussian init), bim (K=10,
  // step=eps/4, no init), pgd (K=20, step=eps/4, uniform init).
  static AttackConfig defaults(AttackFamily family, double eps = 8.0);

  // "pgd:k=20,eps=8,step=2". Keys: k, eps, step, sigma, init, clamp, seed,
  // restarts. Unspecified keys take the family defaults for the given eps.
  static AttackConfig parse(std::string_view text);
  std::string to_string() const;

  void validate() const;
  double sigma_or_default() const { return sigma ? *sigma : 2.0 * eps; }
  bool clips_to_ball() const { return family != AttackFamily::RfgsmProposed; }

  friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

// What an attack may ask of a model: logits and the input gradient of the
// summed cross-entropy against per-sample target distributions.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::size_t classes() const = 0;
  virtual Tensor<float> logits(const Tensor<float>& x) = 0;
  // Gradient of sum_n CE(f(x)_n, target_n) w.r.t. x. When losses is non-null
  // it receives the per-sample losses at x.
  virtual Tensor<float> input_gradient(const Tensor<float>& x, const Tensor<float>& targets,
                                       std::vector<float>* losses = nullptr) = 0;
};

// Adapter for a WRN. Every input_gradient call is one combined
// forward/backward pass and bumps the optional counter.
class WrnClassifier final : public Classifier {
 public:
  WrnClassifier(Wrn<float>& model, NormMode mode, std::uint64_t* pass_counter = nullptr)
      : model_(model), mode_(mode), counter_(pass_counter) {}
  std::size_t classes() const override { return static_cast<std::size_t>(model_.spec().classes); }
  Tensor<float> logits(const Tensor<float>& x) override;
  Tensor<float> input_gradient(const Tensor<float>& x, const Tensor<float>& targets,
                               std::vector<float>* losses = nullptr) override;

 private:
  Wrn<float>& model_;
  NormMode mode_;
  std::uint64_t* counter_;
};

// Called with iteration 0 after initialization, then after every iteration
// with its 1-based index.
using AttackObserver = std::function<void(int iteration, const Tensor<float>& delta)>;

// Returns delta with the shape of x. Sample i draws its random
// initialization from a stream keyed by (seed, first_index + i), so results
// do not depend on how a dataset is split into batches.
Tensor<float> perturb(Classifier& model, const Tensor<float>& x, const std::vector<int>& labels,
                      const AttackConfig& cfg, std::size_t first_index = 0,
                      const AttackObserver& observer = {});

// Same update rule against soft targets (rows of N x classes distributions).
Tensor<float> perturb_soft(Classifier& model, const Tensor<float>& x, const Tensor<float>& targets,
                           const AttackConfig& cfg, std::size_t first_index = 0,
                           const AttackObserver& observer = {});

// x + delta, elementwise.
Tensor<float> apply_perturbation(const Tensor<float>& x, const Tensor<float>& delta);

// Clamps delta so that x + delta lies in [0, 1] when evaluated in float.
void clamp_to_box(const Tensor<float>& x, Tensor<float>& delta);

// Clips delta to [-eps, eps] (eps already in [0, 1] units).
void clip_to_ball(Tensor<float>& delta, float eps);

// sign with sign(0) = 0.
inline float sign(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

}  // namespace advnet
