#pragma once

// Training regimes: natural, PGD adversarial, Free-m, TRADES and
// single-step RFGSM, all sharing one SGD-momentum loop.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "advnet/attacks.hpp"
#include "advnet/data.hpp"
#include "advnet/model.hpp"
#include "advnet/parameters.hpp"

namespace advnet {

enum class Objective { Natural, PgdAdv, FreeM, Trades, Rfgsm };

std::string_view objective_token(Objective objective);
Objective parse_objective(std::string_view token);

struct TrainConfig {
  Objective objective = Objective::Natural;
  int epochs = 120;
  int batch_size = 256;
  double lr = 0.1;
  std::vector<int> decay_milestones = {60, 90};
  double decay_factor = 10.0;  // lr is divided by this at each milestone
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double kappa = 0.0;  // weight of the clean term (pgd_adv)
  AttackConfig attack;
  int m = 8;                 // free_m replays
  double lambda_inv = 6.0;   // 1 / lambda (trades)
  std::optional<std::string> init_checkpoint;
  std::uint64_t seed = 0;
  bool augment = false;      // flip + 4-pixel-pad crop
  bool report_timing = true; // false writes 0 seconds for byte-stable reports
  int robust_eval_every = 0; // epochs between PGD-3 validation sweeps, 0 = off
  std::string checkpoint_prefix;  // empty = no checkpoints

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Epochs actually run: epochs / m rounded (free_m), epochs / 2 rounded
// (rfgsm), never below 1 unless epochs is 0.
int effective_epochs(const TrainConfig& cfg);
// Milestones rescaled by the same factor as the epochs.
std::vector<int> effective_milestones(const TrainConfig& cfg);
// lr / decay_factor^(number of milestones <= epoch).
double learning_rate_at(double lr, const std::vector<int>& milestones, double decay_factor, int epoch);

// Trick 2: override the inner-attack step (pixel levels).
TrainConfig with_attack_step(TrainConfig cfg, double step);
// Trick 1: load init_checkpoint (if any) into the model before training.
void apply_initialization(Wrn<float>& model, const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> nat_val_acc;
  std::optional<double> rob_val_acc;
  std::uint64_t grad_passes = 0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t samples_used = 0;  // per epoch, after dropping the ragged batch
  static constexpr const char* kHeader = "epoch,loss,train_acc,nat_val_acc,rob_val_acc,grad_passes,seconds";
  std::string to_csv() const;
};

struct StepInfo {
  int epoch;
  std::size_t batch;       // minibatch index within the epoch
  int replay;              // free_m replay index, else 0
  double loss;
  std::uint64_t passes;    // gradient passes spent on this step
  const GradientMap<float>& grads;
};

struct TrainHooks {
  std::function<void(const StepInfo&)> on_step;
  // Free-m perturbation buffer after each update.
  std::function<void(const Tensor<float>&)> on_free_delta;
};

// Optimizer state carried across runs and checkpoints.
struct OptimizerState {
  ParameterSet<float> velocity;
};

TrainReport train(Wrn<float>& model, const Dataset& train_set, const Dataset* validation,
                  const TrainConfig& cfg, OptimizerState* state = nullptr,
                  const TrainHooks& hooks = {});

// J(f(x), y) + lambda_inv * CE(f(x + delta), softmax(f(x)) detached), with
// batch statistics. Exposed for tests of the objective.
double trades_loss(Wrn<float>& model, const Tensor<float>& x, const std::vector<int>& labels,
                   const Tensor<float>& delta, double lambda_inv);

}  // namespace advnet
