#include "advnet/training.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <numeric>

#include "advnet/checkpoint.hpp"
#include "advnet/error.hpp"
#include "advnet/evaluation.hpp"
#include "advnet/rng.hpp"

namespace advnet {
namespace {

constexpr std::uint64_t kDataStream = 0xDA7A;
constexpr std::uint64_t kAttackStream = 0xA77AC;

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

struct Batch {
  Tensor<float> x;
  std::vector<int> y;
  Tensor<float> targets;
};

struct StepOutcome {
  double loss = 0.0;
  std::size_t correct = 0;
  GradientMap<float> grads;
};

std::size_t count_correct(const Tensor<float>& logits, const std::vector<int>& y) {
  const auto pred = predict(logits);
  std::size_t c = 0;
  for (std::size_t i = 0; i < y.size(); ++i) c += pred[i] == y[i];
  return c;
}

// One combined forward/backward over the listed terms. The first forward
// updates running statistics; later ones use batch statistics only.
struct Term {
  const Tensor<float>* input;
  const Tensor<float>* targets;
  double weight;
  bool counts_accuracy;
};

StepOutcome run_terms(Wrn<float>& model, const std::vector<Term>& terms, const std::vector<int>& labels,
                      Tensor<float>* input_grad = nullptr) {
  Tape<float> tape;
  const auto params = model.register_parameters(tape, true);
  StepOutcome out;
  Var total{};
  bool first = true;
  for (const Term& t : terms) {
    Var in = input_grad ? tape.leaf("input", *t.input) : tape.constant(*t.input);
    Var z = model.forward(tape, in, first ? NormMode::Training : NormMode::BatchStatistics, params);
    Var l = ops::softmax_cross_entropy(tape, z, *t.targets);
    if (t.weight != 1.0) l = ops::scale(tape, l, static_cast<float>(t.weight));
    total = first ? l : ops::add(tape, total, l);
    if (t.counts_accuracy) out.correct = count_correct(tape.value(z), labels);
    first = false;
  }
  out.loss = tape.value(total)[0];
  out.grads = tape.backward(total);
  if (input_grad) {
    *input_grad = std::move(out.grads.at("input"));
    out.grads.erase("input");
  }
  return out;
}

AttackConfig step_attack(const TrainConfig& cfg, std::uint64_t global_step) {
  AttackConfig a = cfg.attack;
  a.seed = Rng::derive(Rng::derive(cfg.seed, kAttackStream), global_step);
  return a;
}

double evaluate_robust(Wrn<float>& model, const Dataset& val, const TrainConfig& cfg) {
  AttackConfig a = AttackConfig::defaults(AttackFamily::Pgd, cfg.attack.eps);
  a.iters = 3;
  a.step = cfg.attack.step;
  a.seed = cfg.seed;
  return robust_accuracy(model, val, a).accuracy;
}

}  // namespace

std::string_view objective_token(Objective objective) {
  switch (objective) {
    case Objective::Natural: return "natural";
    case Objective::PgdAdv: return "pgd_adv";
    case Objective::FreeM: return "free_m";
    case Objective::Trades: return "trades";
    case Objective::Rfgsm: return "rfgsm";
  }
  return "?";
}

Objective parse_objective(std::string_view token) {
  for (Objective o : {Objective::Natural, Objective::PgdAdv, Objective::FreeM, Objective::Trades, Objective::Rfgsm}) {
    if (objective_token(o) == token) return o;
  }
  throw ConfigError("unknown objective '" + std::string(token) + "' (natural, pgd_adv, free_m, trades, rfgsm)");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("lr must be > 0");
  if (!(decay_factor > 0) || !std::isfinite(decay_factor)) throw ConfigError("decay_factor must be > 0");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be >= 0");
  if (!(kappa >= 0 && kappa <= 1)) throw ConfigError("kappa must be in [0, 1]");
  if (m < 1) throw ConfigError("m must be >= 1");
  if (!(lambda_inv >= 0) || !std::isfinite(lambda_inv)) throw ConfigError("lambda_inv must be >= 0");
  if (robust_eval_every < 0) throw ConfigError("robust_eval_every must be >= 0");
  for (std::size_t i = 0; i < decay_milestones.size(); ++i) {
    if (decay_milestones[i] < 0 || (i && decay_milestones[i] <= decay_milestones[i - 1])) {
      throw ConfigError("decay_milestones must be non-negative and strictly increasing");
    }
  }
  attack.validate();
  switch (objective) {
    case Objective::PgdAdv:
      if (attack.family != AttackFamily::Pgd && attack.family != AttackFamily::Bim) {
        throw ConfigError("pgd_adv needs a pgd (or bim) inner attack, got " + std::string(family_token(attack.family)));
      }
      break;
    case Objective::Trades:
      if (attack.family != AttackFamily::Pgd && attack.family != AttackFamily::Bim) {
        throw ConfigError("trades needs a pgd (or bim) inner attack");
      }
      break;
    case Objective::Rfgsm:
      if (attack.family != AttackFamily::RfgsmClassical && attack.family != AttackFamily::RfgsmProposed) {
        throw ConfigError("rfgsm training needs an rfgsm or rfgsm+ attack");
      }
      break;
    default:
      break;
  }
}

int effective_epochs(const TrainConfig& cfg) {
  if (cfg.epochs == 0) return 0;
  double divisor = 1.0;
  if (cfg.objective == Objective::FreeM) divisor = cfg.m;
  if (cfg.objective == Objective::Rfgsm) divisor = 2.0;
  return std::max(1, static_cast<int>(std::lround(cfg.epochs / divisor)));
}

std::vector<int> effective_milestones(const TrainConfig& cfg) {
  double divisor = 1.0;
  if (cfg.objective == Objective::FreeM) divisor = cfg.m;
  if (cfg.objective == Objective::Rfgsm) divisor = 2.0;
  std::vector<int> out;
  for (int ms : cfg.decay_milestones) {
    const int scaled = static_cast<int>(std::lround(ms / divisor));
    if (out.empty() || scaled > out.back()) out.push_back(scaled);
  }
  return out;
}

double learning_rate_at(double lr, const std::vector<int>& milestones, double decay_factor, int epoch) {
  for (int ms : milestones) {
    if (epoch >= ms) lr /= decay_factor;
  }
  return lr;
}

TrainConfig with_attack_step(TrainConfig cfg, double step) {
  cfg.attack.step = step;
  cfg.attack.validate();
  return cfg;
}

void apply_initialization(Wrn<float>& model, const TrainConfig& cfg) {
  if (!cfg.init_checkpoint) return;
  load_into(model, *cfg.init_checkpoint);
}

std::string TrainReport::to_csv() const {
  std::string s = std::string(kHeader) + "\n";
  for (const auto& r : epochs) {
    s += std::to_string(r.epoch) + "," + fmt(r.loss) + "," + fmt(r.train_acc) + "," +
         (r.nat_val_acc ? fmt(*r.nat_val_acc) : "") + "," + (r.rob_val_acc ? fmt(*r.rob_val_acc) : "") + "," +
         std::to_string(r.grad_passes) + "," + fmt(r.seconds) + "\n";
  }
  return s;
}

double trades_loss(Wrn<float>& model, const Tensor<float>& x, const std::vector<int>& labels,
                   const Tensor<float>& delta, double lambda_inv) {
  const Tensor<float> clean = model.logits(x, NormMode::BatchStatistics);
  const Tensor<float> p = softmax(clean);
  const Tensor<float> adv = model.logits(apply_perturbation(x, delta), NormMode::BatchStatistics);
  const auto natural = cross_entropy_per_sample(clean, one_hot<float>(labels, std::size_t(model.spec().classes)));
  const auto robust = cross_entropy_per_sample(adv, p);
  double a = 0, b = 0;
  for (float v : natural) a += v;
  for (float v : robust) b += v;
  return a / double(labels.size()) + lambda_inv * b / double(labels.size());
}

TrainReport train(Wrn<float>& model, const Dataset& train_set, const Dataset* validation,
                  const TrainConfig& cfg, OptimizerState* state, const TrainHooks& hooks) {
  cfg.validate();
  if (train_set.size() == 0) throw ConfigError("training dataset is empty");
  if (train_set.channels() != std::size_t(model.spec().input_channels)) {
    throw ConfigError("model expects " + std::to_string(model.spec().input_channels) +
                      " input channels, training data has " + std::to_string(train_set.channels()));
  }
  if (train_set.classes > model.spec().classes) throw ConfigError("training data has more classes than the model");
  const std::size_t B = std::size_t(cfg.batch_size);
  if (B > train_set.size()) {
    throw ConfigError("batch_size " + std::to_string(B) + " exceeds the " + std::to_string(train_set.size()) +
                      " training samples");
  }
  const std::size_t batches = train_set.size() / B;
  const int epochs = effective_epochs(cfg);
  const std::vector<int> milestones = effective_milestones(cfg);
  if (cfg.objective == Objective::FreeM && std::uint64_t(cfg.m) > std::uint64_t(batches) * std::uint64_t(std::max(cfg.epochs, 1))) {
    throw ConfigError("m = " + std::to_string(cfg.m) + " exceeds minibatches x epochs");
  }

  OptimizerState local;
  OptimizerState& opt = state ? *state : local;
  if (opt.velocity.empty()) opt.velocity = model.parameters().zeros_like();

  const std::size_t classes = std::size_t(model.spec().classes);
  const std::size_t per = train_set.images.size() / train_set.size();
  const float eps = static_cast<float>(cfg.attack.eps / 255.0);
  const float step = static_cast<float>(cfg.attack.step / 255.0);

  TrainReport report;
  report.samples_used = batches * B;
  std::uint64_t passes = 0, global_step = 0;
  Tensor<float> free_delta;
  if (cfg.objective == Objective::FreeM) {
    Shape s = train_set.images.shape();
    s[0] = B;
    free_delta = Tensor<float>(s);
  }

  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const double lr = learning_rate_at(cfg.lr, milestones, cfg.decay_factor, epoch);
    Rng data_rng(Rng::derive(Rng::derive(cfg.seed, kDataStream), std::uint64_t(epoch)));
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[data_rng.below(i)]);

    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0, steps = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      Batch batch;
      Shape s = train_set.images.shape();
      s[0] = B;
      batch.x = Tensor<float>(s);
      for (std::size_t i = 0; i < B; ++i) {
        const std::size_t src = order[b * B + i];
        std::copy_n(train_set.images.ptr() + src * per, per, batch.x.ptr() + i * per);
        batch.y.push_back(train_set.labels[src]);
      }
      if (cfg.augment) augment(batch.x, data_rng, true, 4);
      batch.targets = one_hot<float>(batch.y, classes);

      const int replays = cfg.objective == Objective::FreeM ? cfg.m : 1;
      for (int replay = 0; replay < replays; ++replay) {
        const std::uint64_t before = passes;
        StepOutcome out;
        Tensor<float> adv, soft;
        switch (cfg.objective) {
          case Objective::Natural:
            out = run_terms(model, {{&batch.x, &batch.targets, 1.0, true}}, batch.y);
            break;
          case Objective::PgdAdv:
            if (cfg.kappa == 1.0) {
              out = run_terms(model, {{&batch.x, &batch.targets, 1.0, true}}, batch.y);
              break;
            } else {
              WrnClassifier clf(model, NormMode::BatchStatistics, &passes);
              adv = apply_perturbation(batch.x, perturb(clf, batch.x, batch.y, step_attack(cfg, global_step)));
              std::vector<Term> terms;
              if (cfg.kappa > 0.0) terms.push_back({&batch.x, &batch.targets, cfg.kappa, false});
              terms.push_back({&adv, &batch.targets, 1.0 - cfg.kappa, true});
              out = run_terms(model, terms, batch.y);
            }
            break;
          case Objective::FreeM: {
            Tensor<float> delta = free_delta;
            clamp_to_box(batch.x, delta);
            adv = apply_perturbation(batch.x, delta);
            Tensor<float> g;
            out = run_terms(model, {{&adv, &batch.targets, 1.0, true}}, batch.y, &g);
            for (std::size_t i = 0; i < free_delta.size(); ++i) free_delta[i] += step * sign(g[i]);
            clip_to_ball(free_delta, eps);
            if (hooks.on_free_delta) hooks.on_free_delta(free_delta);
            break;
          }
          case Objective::Trades:
            if (cfg.lambda_inv == 0.0) {
              out = run_terms(model, {{&batch.x, &batch.targets, 1.0, true}}, batch.y);
            } else {
              soft = softmax(model.logits(batch.x, NormMode::BatchStatistics));
              WrnClassifier clf(model, NormMode::BatchStatistics, &passes);
              adv = apply_perturbation(batch.x, perturb_soft(clf, batch.x, soft, step_attack(cfg, global_step)));
              out = run_terms(model, {{&batch.x, &batch.targets, 1.0, false}, {&adv, &soft, cfg.lambda_inv, true}},
                              batch.y);
            }
            break;
          case Objective::Rfgsm: {
            WrnClassifier clf(model, NormMode::BatchStatistics, &passes);
            adv = apply_perturbation(batch.x, perturb(clf, batch.x, batch.y, step_attack(cfg, global_step)));
            out = run_terms(model, {{&adv, &batch.targets, 1.0, true}}, batch.y);
            break;
          }
        }
        ++passes;
        if (!std::isfinite(out.loss)) throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
        sgd_momentum_step(model.parameters(), out.grads, opt.velocity, lr, cfg.momentum, cfg.weight_decay);
        if (hooks.on_step) hooks.on_step({epoch, b, replay, out.loss, passes - before, out.grads});
        loss_sum += out.loss;
        correct += out.correct;
        seen += B;
        ++steps;
        ++global_step;
      }
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.loss = loss_sum / double(steps);
    rec.train_acc = double(correct) / double(seen);
    if (validation) {
      rec.nat_val_acc = natural_accuracy(model, *validation);
      if (cfg.robust_eval_every > 0 && (epoch + 1) % cfg.robust_eval_every == 0) {
        rec.rob_val_acc = evaluate_robust(model, *validation, cfg);
      }
    }
    rec.grad_passes = passes;
    if (cfg.report_timing) {
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    }
    report.epochs.push_back(rec);

    if (!cfg.checkpoint_prefix.empty()) {
      const bool milestone = std::find(milestones.begin(), milestones.end(), epoch + 1) != milestones.end();
      if (milestone) {
        save_checkpoint(cfg.checkpoint_prefix + "_epoch" + std::to_string(epoch + 1) + ".ancp", model, &opt.velocity);
      }
    }
  }
  if (!cfg.checkpoint_prefix.empty()) {
    save_checkpoint(cfg.checkpoint_prefix + "_final.ancp", model, &opt.velocity);
  }
  return report;
}

}  // namespace advnet
