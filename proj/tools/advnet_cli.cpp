// advnet: train, attack, evaluate and probe wide residual networks.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "advnet/attacks.hpp"
#include "advnet/checkpoint.hpp"
#include "advnet/config.hpp"
#include "advnet/data.hpp"
#include "advnet/error.hpp"
#include "advnet/evaluation.hpp"
#include "advnet/model.hpp"
#include "advnet/training.hpp"

namespace {

using namespace advnet;

constexpr int kConfigExit = 1;
constexpr int kRuntimeExit = 2;

// Held-out synthetic set shaped like the model's input, used when --data is
// omitted for single-channel models.
std::string default_data(const WrnSpec& spec) {
  if (spec.input_channels != 1) {
    throw ConfigError("--data is required for " + std::to_string(spec.input_channels) + "-channel models");
  }
  return "synth:blobs,n=256,noise=0.1,seed=1,size=" + std::to_string(spec.input_size) +
         ",classes=" + std::to_string(spec.classes);
}

Dataset load_matching(const std::string& source, const Wrn<float>& model) {
  Dataset d = load_data(source);
  const auto& s = model.spec();
  if (d.channels() != std::size_t(s.input_channels) || d.height() != std::size_t(s.input_size) ||
      d.width() != std::size_t(s.input_size)) {
    throw ConfigError("data shape " + std::to_string(d.channels()) + "x" + std::to_string(d.height()) + "x" +
                      std::to_string(d.width()) + " does not match model input " + describe(s));
  }
  if (d.classes > s.classes) throw ConfigError("data has more classes than the model");
  return d;
}

void write_text(const std::string& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

struct TrainArgs {
  std::string config, init, out = "model.ancp";
};

int run_train(const TrainArgs& a) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(a.config);
  } catch (const ParseError& e) {
    throw ConfigError(a.config + ": " + e.what());
  }
  if (!a.init.empty()) cfg.train.init_checkpoint = a.init;
  Dataset train_set = load_data(cfg.train_data);
  std::optional<Dataset> val;
  if (!cfg.val_data.empty()) {
    val = load_data(cfg.val_data);
    val->split = "validation";
  }
  if (train_set.channels() != std::size_t(cfg.model.input_channels) ||
      train_set.height() != std::size_t(cfg.model.input_size)) {
    throw ConfigError("training data shape does not match input_channels/input_size");
  }
  Wrn<float> model(cfg.model, cfg.train.seed);
  if (cfg.normalize_inputs) {
    const ChannelStats st = channel_stats(train_set);
    model.set_input_normalization(st.mean, st.stddev);
  }
  apply_initialization(model, cfg.train);
  const TrainReport report = train(model, train_set, val ? &*val : nullptr, cfg.train);
  write_text(cfg.report, report.to_csv());
  save_checkpoint(a.out, model);
  if (!report.epochs.empty()) {
    const auto& last = report.epochs.back();
    std::printf("epochs=%d loss=%.6g train_acc=%.4f", last.epoch, last.loss, last.train_acc);
    if (last.nat_val_acc) std::printf(" nat_val_acc=%.4f", *last.nat_val_acc);
    std::printf("\n");
  }
  return 0;
}

struct EvalArgs {
  std::string model, data;
  std::vector<std::string> attacks;
  std::uint64_t seed = 0;
  std::size_t batch = 256;
  std::string out;
};

int run_eval(const EvalArgs& a) {
  std::vector<AttackConfig> attacks;
  for (const auto& s : a.attacks) attacks.push_back(AttackConfig::parse(s));
  auto ck = load_checkpoint(a.model);
  const Dataset d = load_matching(a.data.empty() ? default_data(ck.model.spec()) : a.data, ck.model);
  const EvalReport r = evaluate(ck.model, d, attacks, a.seed, a.batch);
  const std::string csv = r.to_csv();
  if (a.out.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    write_text(a.out, csv);
  }
  return 0;
}

struct AttackArgs {
  std::string model, data, attack, images, labels;
  std::uint64_t seed = 0;
  std::size_t batch = 256;
};

// Writes the perturbed set in the input's own family of formats: IDX for
// single-channel data, CIFAR binary for three channels.
int run_attack(const AttackArgs& a) {
  AttackConfig cfg = AttackConfig::parse(a.attack);
  cfg.seed = a.seed;
  auto ck = load_checkpoint(a.model);
  Dataset d = load_matching(a.data.empty() ? default_data(ck.model.spec()) : a.data, ck.model);
  WrnClassifier clf(ck.model, NormMode::Evaluation);
  const std::size_t per = d.images.size() / d.size();
  Dataset adv = d;
  for (std::size_t b = 0; b < d.size(); b += a.batch) {
    const Dataset part = d.slice(b, std::min(d.size(), b + a.batch));
    const Tensor<float> delta = perturb(clf, part.images, part.labels, cfg, b);
    const Tensor<float> x = apply_perturbation(part.images, delta);
    std::copy_n(x.ptr(), x.size(), adv.images.ptr() + b * per);
  }
  if (d.channels() == 1) {
    if (a.labels.empty()) throw ConfigError("--labels is required for single-channel output");
    write_idx(adv, a.images, a.labels);
  } else if (d.channels() == 3 && d.height() == 32 && d.width() == 32) {
    write_file(a.images, encode_cifar(adv, d.classes > 10 ? 2 : 1));
  } else {
    throw ConfigError("no output format for " + std::to_string(d.channels()) + "-channel data");
  }
  const RobustResult r = robust_accuracy(ck.model, d, cfg, a.batch);
  std::printf("attack=%s accuracy=%.6f n=%zu\n", cfg.to_string().c_str(), r.accuracy, d.size());
  return 0;
}

struct SurfaceArgs {
  std::string model, data, out;
  std::size_t index = 0;
  double extent = 8.0;
  int res = 51;
  std::uint64_t seed = 0;
};

int run_surface(const SurfaceArgs& a) {
  if (a.res < 1 || a.res % 2 == 0) throw ConfigError("--res must be a positive odd integer");
  if (!(a.extent >= 0)) throw ConfigError("--extent must be >= 0");
  auto ck = load_checkpoint(a.model);
  const Dataset d = load_matching(a.data.empty() ? default_data(ck.model.spec()) : a.data, ck.model);
  if (a.index >= d.size()) {
    throw ConfigError("--index " + std::to_string(a.index) + " out of range for " + std::to_string(d.size()) +
                      " samples");
  }
  const Dataset one = d.slice(a.index, a.index + 1);
  WrnClassifier clf(ck.model, NormMode::Evaluation);
  const SurfaceGrid g = loss_surface(clf, one.images, one.labels[0], {a.extent, a.res, a.seed});
  const std::string csv = surface_to_csv(g);
  if (a.out.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    write_text(a.out, csv);
  }
  return 0;
}

struct ExportArgs {
  std::string model, data, dir = ".";
  double eps = 30.0;
  int k = 50;
  std::size_t n = 16;
  std::uint64_t seed = 0;
};

int run_export(const ExportArgs& a) {
  auto ck = load_checkpoint(a.model);
  const Dataset d = load_matching(a.data.empty() ? default_data(ck.model.spec()) : a.data, ck.model);
  std::filesystem::create_directories(a.dir);
  const ExportResult r = export_large_eps(ck.model, d, {a.n, a.eps, a.k, a.seed, a.dir});
  std::printf("exported=%zu changed=%zu\n", r.labels.size(), r.changed);
  return 0;
}

struct ParamsArgs {
  std::string arch;
  int classes = 10, channels = 3, size = 32;
};

int run_params(const ParamsArgs& a) {
  const WrnSpec spec = WrnSpec::from_arch(a.arch, a.classes, a.channels, a.size);
  std::printf("%zu\n", param_count(spec));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"advnet: adversarial training and evaluation of wide residual networks"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a model from an experiment file");
  train_cmd->add_option("--config", ta.config, "experiment file")->required();
  train_cmd->add_option("--init", ta.init, "initialize from this checkpoint");
  train_cmd->add_option("--out", ta.out, "final checkpoint path")->capture_default_str();

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "natural and robust accuracy");
  eval_cmd->add_option("--model", ea.model, "checkpoint")->required();
  eval_cmd->add_option("--data", ea.data, "data source");
  eval_cmd->add_option("--attack", ea.attacks, "attack string, repeatable (pgd:k=20,eps=8,step=2)");
  eval_cmd->add_option("--seed", ea.seed)->capture_default_str();
  eval_cmd->add_option("--batch", ea.batch)->capture_default_str()->check(CLI::PositiveNumber);
  eval_cmd->add_option("--out", ea.out, "CSV path (default stdout)");

  AttackArgs aa;
  auto* attack_cmd = app.add_subcommand("attack", "write adversarial versions of a dataset");
  attack_cmd->add_option("--model", aa.model, "checkpoint")->required();
  attack_cmd->add_option("--data", aa.data, "data source");
  attack_cmd->add_option("--attack", aa.attack, "attack string")->required();
  attack_cmd->add_option("--images", aa.images, "output images file (IDX or CIFAR binary)")->required();
  attack_cmd->add_option("--labels", aa.labels, "output IDX labels file");
  attack_cmd->add_option("--seed", aa.seed)->capture_default_str();
  attack_cmd->add_option("--batch", aa.batch)->capture_default_str()->check(CLI::PositiveNumber);

  SurfaceArgs sa;
  auto* surface_cmd = app.add_subcommand("surface", "loss-surface grid around one sample");
  surface_cmd->add_option("--model", sa.model, "checkpoint")->required();
  surface_cmd->add_option("--index", sa.index, "sample index")->required();
  surface_cmd->add_option("--extent", sa.extent, "half-width in pixel levels")->capture_default_str();
  surface_cmd->add_option("--res", sa.res, "grid points per axis (odd)")->capture_default_str();
  surface_cmd->add_option("--data", sa.data, "data source");
  surface_cmd->add_option("--seed", sa.seed)->capture_default_str();
  surface_cmd->add_option("--out", sa.out, "CSV path (default stdout)");

  ExportArgs xa;
  auto* export_cmd = app.add_subcommand("export", "dump large-budget adversarial images");
  export_cmd->add_option("--model", xa.model, "checkpoint")->required();
  export_cmd->add_option("--eps", xa.eps, "budget in pixel levels")->capture_default_str();
  export_cmd->add_option("--k", xa.k, "PGD iterations")->capture_default_str()->check(CLI::PositiveNumber);
  export_cmd->add_option("--n", xa.n, "samples")->capture_default_str();
  export_cmd->add_option("--data", xa.data, "data source");
  export_cmd->add_option("--dir", xa.dir, "output directory")->capture_default_str();
  export_cmd->add_option("--seed", xa.seed)->capture_default_str();

  ParamsArgs pa;
  auto* params_cmd = app.add_subcommand("params", "print the exact parameter count");
  params_cmd->add_option("--arch", pa.arch, "wrn-<depth>-<widen>[-adaptive]")->required();
  params_cmd->add_option("--classes", pa.classes)->capture_default_str()->check(CLI::PositiveNumber);
  params_cmd->add_option("--input-channels", pa.channels)->capture_default_str()->check(CLI::PositiveNumber);
  params_cmd->add_option("--input-size", pa.size)->capture_default_str()->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* sub = nullptr;
    for (const auto* s : app.get_subcommands()) sub = s;
    std::cerr << (sub ? sub->help() : app.help());
    return kConfigExit;
  }

  try {
    if (*train_cmd) return run_train(ta);
    if (*eval_cmd) return run_eval(ea);
    if (*attack_cmd) return run_attack(aa);
    if (*surface_cmd) return run_surface(sa);
    if (*export_cmd) return run_export(xa);
    if (*params_cmd) return run_params(pa);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeExit;
  }
  return kConfigExit;
}
