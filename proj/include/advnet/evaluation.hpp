#pragma once

// Robust accuracy, loss-surface grids and large-budget example export.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "advnet/attacks.hpp"
#include "advnet/data.hpp"
#include "advnet/model.hpp"

namespace advnet {

std::vector<int> predict(const Tensor<float>& logits);

// Evaluation-mode accuracy on clean inputs.
double natural_accuracy(Wrn<float>& model, const Dataset& data, std::size_t batch = 256);

struct RobustResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;  // cross-entropy at the adversarial points
};

// Evaluation-mode attack on every sample; sample i is seeded by (cfg.seed, i)
// whatever the batch size.
RobustResult robust_accuracy(Wrn<float>& model, const Dataset& data, const AttackConfig& cfg,
                             std::size_t batch = 256);

struct EvalReport {
  double natural_accuracy = 0.0;
  std::vector<std::pair<std::string, double>> robust;  // attack string -> accuracy
  std::size_t n = 0;
  std::uint64_t seed = 0;
  // Header `attack,accuracy,n,seed`; the first row is the clean accuracy.
  std::string to_csv() const;
};

// Each attack runs with its seed replaced by the report seed.
EvalReport evaluate(Wrn<float>& model, const Dataset& data, const std::vector<AttackConfig>& attacks,
                    std::uint64_t seed, std::size_t batch = 256);

struct SurfaceConfig {
  double extent = 8.0;  // pixel levels
  int resolution = 51;  // odd
  std::uint64_t seed = 0;
};

struct SurfaceGrid {
  double extent = 0.0;
  int resolution = 0;
  std::uint64_t seed = 0;
  Tensor<float> d1, d2;       // sign of the input gradient, Rademacher
  std::vector<double> axis;   // a_i = b_i, pixel levels
  std::vector<double> values; // row i (along d1) major, column j along d2
  double at(int i, int j) const { return values[std::size_t(i) * std::size_t(resolution) + std::size_t(j)]; }
};

// values[i][j] = J(f(clamp(x + a_i d1 + b_j d2)), y) with x a single sample.
SurfaceGrid loss_surface(Classifier& model, const Tensor<float>& x, int label, const SurfaceConfig& cfg);

// Metadata block (`# extent=`, `# resolution=`, `# seed=`, `# d1=`, `# d2=`)
// then one comma-separated row per a_i.
std::string surface_to_csv(const SurfaceGrid& grid);
SurfaceGrid surface_from_csv(std::string_view text);

struct ExportConfig {
  std::size_t n = 16;
  double eps = 30.0;
  int iters = 50;
  std::uint64_t seed = 0;
  std::string directory = ".";
};

struct ExportResult {
  std::vector<int> labels, clean_prediction, adversarial_prediction;
  std::size_t changed = 0;  // samples whose predicted class flipped
};

// PGD-k with step 2.5 eps / k from a uniform start. Writes
// orig_<i>.pgm|ppm, adv_<i>.pgm|ppm and predictions.csv into directory.
ExportResult export_large_eps(Wrn<float>& model, const Dataset& data, const ExportConfig& cfg);

}  // namespace advnet
