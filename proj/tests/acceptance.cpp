// Acceptance run: one PASS/FAIL line per criterion, with the measured
// numbers and wall time. The exit status is 0 once every criterion has been
// evaluated; with --strict it is the number of failed criteria.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "advnet/attacks.hpp"
#include "advnet/checkpoint.hpp"
#include "advnet/evaluation.hpp"
#include "advnet/training.hpp"
#include "support/fuzz.hpp"
#include "support/model_gradcheck.hpp"
#include "support/primitive_gradcheck.hpp"
#include "support/toy_classifiers.hpp"

using namespace advnet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [failed]");
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

bool same_bits(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() && std::memcmp(a.ptr(), b.ptr(), a.size() * sizeof(float)) == 0;
}

bool same_grads(const GradientMap<float>& a, const GradientMap<float>& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, g] : a) {
    auto it = b.find(name);
    if (it == b.end() || !same_bits(g, it->second)) return false;
  }
  return true;
}

Tensor<float> random_images(std::size_t n, std::size_t c, std::size_t s, Rng& rng) {
  Tensor<float> x({n, c, s, s});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = float(rng.uniform());
  return x;
}

// ---------------------------------------------------------------- toy task
//
// 4-class blobs at 16x16, low contrast so an 8-level budget matters.

Dataset toy_train(std::uint64_t seed) {
  SynthSpec s;
  s.n = 512;
  s.image_size = 16;
  s.noise = 0.05;
  s.contrast = 0.15;
  s.seed = 100 + seed;
  return synth_dataset(s);
}

const Dataset& toy_validation() {
  static const Dataset d = [] {
    SynthSpec s;
    s.n = 256;
    s.image_size = 16;
    s.noise = 0.05;
    s.contrast = 0.15;
    s.seed = 999;
    return synth_dataset(s);
  }();
  return d;
}

AttackConfig toy_eval_attack() {
  AttackConfig a = AttackConfig::parse("pgd:k=20,eps=8,step=2");
  a.seed = 7;
  return a;
}

TrainConfig toy_config(Objective objective, const std::string& attack, int epochs, std::uint64_t seed) {
  TrainConfig c;
  c.objective = objective;
  c.attack = AttackConfig::parse(attack);
  c.epochs = epochs;
  c.batch_size = 64;
  c.lr = 0.05;
  c.decay_milestones = {epochs / 2, epochs * 3 / 4};
  c.weight_decay = 5e-4;
  c.m = 4;
  c.seed = seed;
  c.report_timing = false;
  return c;
}

struct ToyRun {
  double natural = 0, robust = 0;
  std::string csv;
  Bytes checkpoint;
};

ToyRun toy_run(const TrainConfig& cfg, bool adaptive) {
  const Dataset train_set = toy_train(cfg.seed);
  Wrn<float> model(WrnSpec{10, 1, 4, adaptive, 1, 16}, cfg.seed);
  const ChannelStats st = channel_stats(train_set);
  model.set_input_normalization(st.mean, st.stddev);
  OptimizerState opt;
  ToyRun r;
  r.csv = train(model, train_set, nullptr, cfg, &opt).to_csv();
  r.natural = natural_accuracy(model, toy_validation());
  r.robust = robust_accuracy(model, toy_validation(), toy_eval_attack()).accuracy;
  r.checkpoint = encode_checkpoint(model, &opt.velocity);
  return r;
}

std::string pct(double a) { return fmt("%.1f%%", 100 * a); }

// ---------------------------------------------------------------- criteria

Outcome parameter_counts(const std::string& cli) {
  Outcome o;
  struct Row {
    const char* arch;
    int classes;
    double want;
  } rows[] = {{"wrn-28-4", 10, 5.85e6}, {"wrn-28-4", 100, 5.87e6}, {"wrn-28-5", 10, 9.13e6}, {"wrn-34-10", 10, 46.16e6}};
  const fs::path out = fs::temp_directory_path() / "advnet_acceptance_params.txt";
  auto query = [&](const std::string& arch, int classes) {
    const std::string cmd = "'" + cli + "' params --arch " + arch + " --classes " + std::to_string(classes) + " >'" +
                            out.string() + "'";
    const int status = std::system(cmd.c_str());
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return -1.0;
    std::ifstream f(out);
    double v = -1;
    f >> v;
    return v;
  };
  for (const auto& r : rows) {
    const double got = query(r.arch, r.classes);
    o.require(std::abs(got - r.want) <= 0.005 * r.want,
              std::string(r.arch) + "/" + std::to_string(r.classes) + "=" + fmt("%.0f", got));
  }
  const double plain = query("wrn-28-4", 10), adaptive = query("wrn-28-4-adaptive", 10);
  const double overhead = adaptive / plain - 1.0;
  o.require(overhead >= 0.01 && overhead <= 0.08, "adaptive overhead " + fmt("%+.2f%%", 100 * overhead));
  return o;
}

Outcome gradient_integrity() {
  Outcome o;
  double worst = 0;
  std::string worst_name;
  std::size_t checked = 0;
  for (const auto& r : advnet::testing::check_all_primitives()) {
    checked += r.checked;
    if (r.worst >= worst) worst = r.worst, worst_name = r.name;
  }
  o.require(worst <= 1e-4, "primitives " + std::to_string(checked) + " coords worst " + fmt("%.2e", worst) +
                               " (" + worst_name + ")");
  const auto m = advnet::testing::wrn_gradcheck(30);
  o.require(m.worst <= 1e-4 && m.tensors > 40, "adaptive WRN-10-1 " + std::to_string(m.tensors) + " tensors, " +
                                                   std::to_string(m.checked) + " coords worst " +
                                                   fmt("%.2e", m.worst) + " (" + m.worst_name + ")");
  return o;
}

Outcome attack_correctness() {
  using advnet::testing::LinearClassifier;
  using advnet::testing::MlpClassifier;
  Outcome o;

  {  // (a) two-class linear models, where the sign step is optimal
    Rng rng(11);
    double worst = 0;
    for (int trial = 0; trial < 500; ++trial) {
      const std::size_t s = 2 + rng.below(5), D = s * s;
      LinearClassifier model(2, D, rng);
      const Tensor<float> x = random_images(1, 1, s, rng);
      const int y = int(rng.below(2)), other = 1 - y;
      const double eps = rng.uniform(0.5, 32.0);
      AttackConfig cfg = AttackConfig::defaults(AttackFamily::Fgsm, eps);
      cfg.pixel_clamp = false;
      const Tensor<float> delta = perturb(model, x, {y}, cfg);
      const auto& w = model.weights();
      const auto& b = model.bias();
      double margin = b[std::size_t(y)] - b[std::size_t(other)], l1 = 0, moved = margin;
      for (std::size_t j = 0; j < D; ++j) {
        const double dw = w[std::size_t(y) * D + j] - w[std::size_t(other) * D + j];
        margin += dw * x[j];
        moved += dw * (double(x[j]) + double(delta[j]));
        l1 += std::abs(dw);
      }
      const double optimum = std::log1p(std::exp(-(margin - eps / 255.0 * l1)));
      worst = std::max(worst, std::abs(std::log1p(std::exp(-moved)) - optimum));
    }
    o.require(worst <= 1e-6, "(a) FGSM vs closed form worst " + fmt("%.1e", worst));
  }

  {  // (b) containment after every iteration
    Rng rng(2024);
    std::size_t violations = 0, observed = 0;
    const AttackFamily families[] = {AttackFamily::Pgd, AttackFamily::Bim, AttackFamily::RfgsmClassical};
    for (int trial = 0; trial < 1000; ++trial) {
      const AttackFamily fam = families[trial % 3];
      const std::size_t n = 1 + rng.below(3), c = 1 + rng.below(2), s = 2 + rng.below(4);
      const int classes = 2 + int(rng.below(4));
      MlpClassifier model(std::size_t(classes), c * s * s, 6, rng);
      Tensor<float> x = random_images(n, c, s, rng);
      for (std::size_t i = 0; i < x.size(); ++i)
        if (rng.below(8) == 0) x[i] = rng.below(2) ? 1.0f : 0.0f;
      AttackConfig cfg = AttackConfig::defaults(fam, rng.uniform(0.0, 40.0));
      if (fam != AttackFamily::RfgsmClassical) {
        cfg.iters = 1 + int(rng.below(8));
        cfg.step = rng.uniform(0.0, 20.0);
      }
      cfg.seed = rng.next_u64();
      std::vector<int> y(n);
      for (auto& v : y) v = int(rng.below(std::uint64_t(classes)));
      const float eps = float(cfg.eps / 255.0);
      perturb(model, x, y, cfg, 0, [&](int, const Tensor<float>& d) {
        ++observed;
        for (std::size_t i = 0; i < d.size(); ++i) {
          const float v = x[i] + d[i];
          if (!(std::abs(d[i]) <= eps) || !(v >= 0.0f && v <= 1.0f)) ++violations;
        }
      });
    }
    o.require(violations == 0, "(b) 1000 cases, " + std::to_string(observed) + " iterates, " +
                                   std::to_string(violations) + " outside");
  }

  {  // (c) proposed RFGSM: one full step off the Gaussian start, no clip
    Rng rng(5);
    std::size_t unclamped = 0, wrong = 0, outside = 0;
    for (int trial = 0; trial < 100; ++trial) {
      LinearClassifier model(3, 36, rng);
      const Tensor<float> x = random_images(2, 1, 6, rng);
      AttackConfig cfg = AttackConfig::defaults(AttackFamily::RfgsmProposed, rng.uniform(1.0, 16.0));
      cfg.seed = std::uint64_t(trial);
      Tensor<float> start;
      const Tensor<float> delta =
          perturb(model, x, {0, 2}, cfg, 0, [&](int k, const Tensor<float>& d) { if (k == 0) start = d; });
      const Tensor<float> g = model.input_gradient(model.last_input, one_hot<float>({0, 2}, 3), nullptr);
      const float step = float(cfg.eps / 255.0);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const float moved = start[i] + step * sign(g[i]);
        const float v = x[i] + moved;
        if (!(v >= 0.0f && v <= 1.0f) || g[i] == 0.0f) continue;
        ++unclamped;
        wrong += delta[i] != moved;
        outside += std::abs(delta[i]) > step;
      }
    }
    o.require(wrong == 0 && outside > 0 && unclamped > 1000,
              "(c) " + std::to_string(unclamped) + " unclamped coords, " + std::to_string(wrong) + " off-step, " +
                  std::to_string(outside) + " beyond eps");
  }

  {  // (d) PGD(K=1, no init, step=eps) against FGSM
    Rng rng(8);
    int equal = 0, total = 0;
    for (int trial = 0; trial < 50; ++trial, ++total) {
      MlpClassifier model(4, 2 * 5 * 5, 8, rng);
      const Tensor<float> x = random_images(3, 2, 5, rng);
      const std::vector<int> y = {int(rng.below(4)), int(rng.below(4)), int(rng.below(4))};
      const double eps = rng.uniform(1.0, 16.0);
      AttackConfig pgd = AttackConfig::defaults(AttackFamily::Pgd, eps);
      pgd.iters = 1;
      pgd.step = eps;
      pgd.random_init = false;
      equal += same_bits(perturb(model, x, y, pgd), perturb(model, x, y, AttackConfig::defaults(AttackFamily::Fgsm, eps)));
    }
    for (bool adaptive : {false, true}) {
      Wrn<float> net(WrnSpec{10, 1, 4, adaptive, 1, 16}, 3);
      WrnClassifier clf(net, NormMode::BatchStatistics);
      const Tensor<float> x = random_images(4, 1, 16, rng);
      ++total;
      equal += same_bits(perturb(clf, x, {0, 1, 2, 3}, AttackConfig::parse("pgd:k=1,eps=8,step=8,init=0")),
                         perturb(clf, x, {0, 1, 2, 3}, AttackConfig::parse("fgsm:eps=8")));
    }
    o.require(equal == total, "(d) " + std::to_string(equal) + "/" + std::to_string(total) + " bitwise equal");
  }
  return o;
}

struct Recorded {
  std::vector<GradientMap<float>> grads;
  std::vector<std::uint64_t> passes;
  Bytes checkpoint;
  std::string csv;
};

Recorded record(const TrainConfig& cfg, bool adaptive) {
  SynthSpec s;
  s.n = 128;
  s.image_size = 16;
  s.noise = 0.05;
  s.contrast = 0.15;
  const Dataset d = synth_dataset(s);
  Wrn<float> model(WrnSpec{10, 1, 4, adaptive, 1, 16}, 21);
  model.set_input_normalization({0.5f}, {0.1f});
  Recorded r;
  TrainHooks hooks;
  hooks.on_step = [&](const StepInfo& info) {
    r.grads.push_back(info.grads);
    r.passes.push_back(info.passes);
  };
  r.csv = train(model, d, nullptr, cfg, nullptr, hooks).to_csv();
  r.checkpoint = encode_checkpoint(model);
  return r;
}

TrainConfig small_config(Objective o) {
  TrainConfig c;
  c.objective = o;
  c.epochs = 2;
  c.batch_size = 32;
  c.lr = 0.05;
  c.decay_milestones = {1};
  c.seed = 5;
  c.report_timing = false;
  c.attack = AttackConfig::parse("pgd:k=3,eps=8,step=2");
  return c;
}

Outcome objective_reductions() {
  Outcome o;
  for (bool adaptive : {false, true}) {
    const std::string tag = adaptive ? " (adaptive)" : "";
    const Recorded nat = record(small_config(Objective::Natural), adaptive);

    TrainConfig adv = small_config(Objective::PgdAdv);
    adv.kappa = 1.0;
    const Recorded a = record(adv, adaptive);
    o.require(a.checkpoint == nat.checkpoint && a.csv == nat.csv, "kappa=1" + tag);

    TrainConfig fr = small_config(Objective::FreeM);
    fr.m = 1;
    fr.attack = AttackConfig::parse("pgd:eps=0,step=8");
    const Recorded f = record(fr, adaptive);
    bool grads = f.grads.size() == nat.grads.size();
    for (std::size_t i = 0; grads && i < f.grads.size(); ++i) grads = same_grads(f.grads[i], nat.grads[i]);
    o.require(grads && f.checkpoint == nat.checkpoint, "m=1,eps=0" + tag);

    TrainConfig tr = small_config(Objective::Trades);
    tr.lambda_inv = 0.0;
    const Recorded t = record(tr, adaptive);
    grads = t.grads.size() == nat.grads.size();
    for (std::size_t i = 0; grads && i < t.grads.size(); ++i) grads = same_grads(t.grads[i], nat.grads[i]);
    o.require(grads, "lambda_inv=0 per-batch gradients" + tag);
  }
  return o;
}

Outcome compute_accounting() {
  Outcome o;
  auto all_equal = [](const std::vector<std::uint64_t>& v, std::uint64_t want) {
    return !v.empty() && std::all_of(v.begin(), v.end(), [&](auto p) { return p == want; });
  };
  for (int K : {1, 3, 7, 10}) {
    TrainConfig c = small_config(Objective::PgdAdv);
    c.epochs = 1;
    c.attack.iters = K;
    o.require(all_equal(record(c, true).passes, std::uint64_t(K + 1)), "pgd_adv K=" + std::to_string(K));
  }
  TrainConfig fr = small_config(Objective::FreeM);
  fr.m = 4;
  fr.epochs = 4;
  fr.attack = AttackConfig::parse("pgd:eps=8,step=8");
  const auto free_passes = record(fr, true).passes;
  o.require(all_equal(free_passes, 1) && free_passes.size() == 16, "free_m 1 per replay");
  for (const char* atk : {"rfgsm:eps=8", "rfgsm+:eps=8"}) {
    TrainConfig c = small_config(Objective::Rfgsm);
    c.attack = AttackConfig::parse(atk);
    o.require(all_equal(record(c, true).passes, 2), std::string(atk) + " 2");
  }
  o.require(all_equal(record(small_config(Objective::Natural), true).passes, 1), "natural 1");
  return o;
}

Outcome robustness_ordering() {
  Outcome o;
  const ToyRun nat = toy_run(toy_config(Objective::Natural, "pgd", 20, 0), false);
  const ToyRun pgd = toy_run(toy_config(Objective::PgdAdv, "pgd:k=7,eps=8,step=2", 20, 0), false);
  const ToyRun fr = toy_run(toy_config(Objective::FreeM, "pgd:eps=8,step=8", 40, 0), false);
  const ToyRun prop = toy_run(toy_config(Objective::Rfgsm, "rfgsm+:eps=8", 40, 0), false);
  const ToyRun classical = toy_run(toy_config(Objective::Rfgsm, "rfgsm:eps=8", 40, 0), false);
  o.require(nat.robust <= 0.05, "natural " + pct(nat.robust) + " (clean " + pct(nat.natural) + ")");
  o.require(pgd.robust - nat.robust >= 0.30, "pgd_adv " + pct(pgd.robust));
  o.require(fr.robust - nat.robust >= 0.30, "free_m " + pct(fr.robust));
  o.require(prop.robust - nat.robust >= 0.30, "rfgsm proposed " + pct(prop.robust));
  o.require(prop.robust - classical.robust >= 0.10,
            "rfgsm classical " + pct(classical.robust) + ", gap " + fmt("%.1f pts", 100 * (prop.robust - classical.robust)));
  return o;
}

Outcome adaptive_vs_plain() {
  Outcome o;
  std::vector<double> adaptive, plain;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TrainConfig c = toy_config(Objective::FreeM, "pgd:eps=8,step=8", 40, seed);
    plain.push_back(toy_run(c, false).robust);
    adaptive.push_back(toy_run(c, true).robust);
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  std::string list;
  for (std::size_t i = 0; i < 5; ++i) list += (i ? " " : "") + pct(adaptive[i]) + "/" + pct(plain[i]);
  o.require(median(adaptive) >= median(plain),
            "median adaptive " + pct(median(adaptive)) + " vs plain " + pct(median(plain)) + " [" + list + "]");
  return o;
}

Outcome identity_reduction() {
  Outcome o;
  struct Shape {
    int channels, size;
  } shapes[] = {{1, 16}, {3, 32}};
  for (const auto& s : shapes) {
    Wrn<float> plain(WrnSpec{10, 1, 10, false, s.channels, s.size}, 9);
    Wrn<float> adaptive(WrnSpec{10, 1, 10, true, s.channels, s.size}, 9);
    plain.mark_statistics_ready(true);
    adaptive.mark_statistics_ready(true);
    Rng rng(std::uint64_t(s.size));
    int equal = 0;
    for (int i = 0; i < 100; ++i) {
      const Tensor<float> x = random_images(1, std::size_t(s.channels), std::size_t(s.size), rng);
      equal += same_bits(plain.logits(x, NormMode::Evaluation), adaptive.logits(x, NormMode::Evaluation));
    }
    o.require(equal == 100, std::to_string(equal) + "/100 equal at " + std::to_string(s.channels) + "x" +
                                std::to_string(s.size) + "x" + std::to_string(s.size));
  }
  return o;
}

Outcome surface_contract() {
  Outcome o;
  SynthSpec s;
  s.n = 8;
  s.image_size = 16;
  s.noise = 0.05;
  s.contrast = 0.15;
  const Dataset d = synth_dataset(s);
  Wrn<float> m(WrnSpec{10, 1, 4, true, 1, 16}, 4);
  m.set_input_normalization({0.5f}, {0.1f});
  m.logits(d.images, NormMode::Training);
  WrnClassifier clf(m, NormMode::Evaluation);
  int centers = 0, exact = 0, flat = 0, round_trips = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Dataset one = d.slice(i, i + 1);
    const float clean =
        cross_entropy_per_sample(m.logits(one.images, NormMode::Evaluation), one_hot<float>(one.labels, 4))[0];
    for (int res : {1, 5, 21}) {
      const SurfaceGrid g = loss_surface(clf, one.images, one.labels[0], {8.0, res, i});
      const int h = (res - 1) / 2;
      ++centers;
      exact += g.at(h, h) == double(clean);
      const SurfaceGrid back = surface_from_csv(surface_to_csv(g));
      round_trips += back.extent == g.extent && back.resolution == g.resolution && back.seed == g.seed &&
                     back.axis == g.axis && back.values == g.values && same_bits(back.d1, g.d1) &&
                     same_bits(back.d2, g.d2);
    }
    const SurfaceGrid z = loss_surface(clf, one.images, one.labels[0], {0.0, 9, i});
    flat += std::all_of(z.values.begin(), z.values.end(), [&](double v) { return v == z.values[0]; });
  }
  o.require(exact == centers, std::to_string(exact) + "/" + std::to_string(centers) + " centers exact");
  o.require(flat == int(d.size()), std::to_string(flat) + "/" + std::to_string(d.size()) + " zero-extent grids flat");
  o.require(round_trips == centers, std::to_string(round_trips) + "/" + std::to_string(centers) + " CSV round trips");
  return o;
}

Outcome persistence() {
  Outcome o;
  const TrainConfig c = toy_config(Objective::FreeM, "pgd:eps=8,step=8", 40, 3);
  const ToyRun a = toy_run(c, true), b = toy_run(c, true);
  o.require(a.csv == b.csv && a.checkpoint == b.checkpoint, "two toy runs identical");

  const fs::path p1 = fs::temp_directory_path() / "advnet_acceptance_1.ancp";
  const fs::path p2 = fs::temp_directory_path() / "advnet_acceptance_2.ancp";
  write_file(p1.string(), a.checkpoint);
  const LoadedCheckpoint back = load_checkpoint(p1.string());
  save_checkpoint(p2.string(), back.model, back.velocity ? &*back.velocity : nullptr);
  o.require(read_file(p2.string()) == a.checkpoint, "save-load-save identical (" + std::to_string(a.checkpoint.size()) + " bytes)");

  const auto t = advnet::testing::fuzz_parsers(2900, 20240601);
  std::string what = "fuzz " + std::to_string(t.cases) + " inputs, " + std::to_string(t.typed) + " typed errors, " +
                     std::to_string(t.untyped) + " untyped";
  for (const auto& e : t.untyped_examples) what += " <" + e + ">";
  o.require(t.cases >= 10000 && t.untyped == 0, what);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli = ADVNET_CLI;
  bool strict = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--strict") strict = true;
    else cli = a;
  }

  struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<Outcome()> run;
  } criteria[] = {
      {1, "parameter counts", 1.0, [&] { return parameter_counts(cli); }},
      {2, "gradient integrity", 120.0, gradient_integrity},
      {3, "attack correctness", 60.0, attack_correctness},
      {4, "objective reductions", 120.0, objective_reductions},
      {5, "compute accounting", 60.0, compute_accounting},
      {6, "toy robustness ordering", 900.0, robustness_ordering},
      {7, "adaptive vs non-adaptive", 1800.0, adaptive_vs_plain},
      {8, "identity reduction", 10.0, identity_reduction},
      {9, "loss-surface contract", 10.0, surface_contract},
      {10, "persistence and determinism", 300.0, persistence},
  };

  int failed = 0;
  for (auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.require(secs <= c.budget_seconds, fmt("%.1fs", secs) + " of " + fmt("%.0fs", c.budget_seconds));
    failed += !o.pass;
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of 10 criteria failed\n", failed);
  return strict ? failed : 0;
}
