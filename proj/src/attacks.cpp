#include "advnet/attacks.hpp"

#include <charconv>
#include <cmath>
#include <limits>

#include "advnet/rng.hpp"

namespace advnet {
namespace {

float to_unit(double levels) { return static_cast<float>(levels / 255.0); }

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_number(std::string_view key, std::string_view text) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ConfigError("attack option '" + std::string(key) + "' expects a number, got '" +
                      std::string(text) + "'");
  }
  return v;
}

long long parse_integer(std::string_view key, std::string_view text) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("attack option '" + std::string(key) + "' expects an integer, got '" +
                      std::string(text) + "'");
  }
  return v;
}

bool parse_flag(std::string_view key, std::string_view text) {
  if (text == "1" || text == "true") return true;
  if (text == "0" || text == "false") return false;
  throw ConfigError("attack option '" + std::string(key) + "' expects 0/1, got '" +
                    std::string(text) + "'");
}

AttackFamily parse_family(std::string_view token) {
  if (token == "fgsm") return AttackFamily::Fgsm;
  if (token == "rfgsm") return AttackFamily::RfgsmClassical;
  if (token == "rfgsm+") return AttackFamily::RfgsmProposed;
  if (token == "bim") return AttackFamily::Bim;
  if (token == "pgd") return AttackFamily::Pgd;
  throw ConfigError("unknown attack family '" + std::string(token) +
                    "' (expected fgsm, rfgsm, rfgsm+, bim or pgd)");
}

bool single_step(AttackFamily f) {
  return f == AttackFamily::Fgsm || f == AttackFamily::RfgsmClassical ||
         f == AttackFamily::RfgsmProposed;
}

void initialize(Tensor<float>& delta, const AttackConfig& cfg, std::uint64_t seed,
                std::size_t first_index) {
  const bool uniform = (cfg.family == AttackFamily::Pgd && cfg.random_init) ||
                       cfg.family == AttackFamily::RfgsmClassical;
  const bool gaussian = cfg.family == AttackFamily::RfgsmProposed;
  if (!uniform && !gaussian) return;
  const std::size_t n = delta.dim(0), per = delta.size() / n;
  const double eps = cfg.eps / 255.0, sigma = cfg.sigma_or_default() / 255.0;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(Rng::derive(seed, first_index + i));
    float* d = delta.ptr() + i * per;
    for (std::size_t j = 0; j < per; ++j) {
      d[j] = static_cast<float>(uniform ? rng.uniform(-eps, eps) : rng.normal(0.0, sigma));
    }
  }
  if (uniform) clip_to_ball(delta, to_unit(cfg.eps));
}

Tensor<float> run_once(Classifier& model, const Tensor<float>& x, const Tensor<float>& targets,
                       const AttackConfig& cfg, std::uint64_t seed, std::size_t first_index,
                       const AttackObserver& observer) {
  Tensor<float> delta = Tensor<float>::zeros_like(x);
  initialize(delta, cfg, seed, first_index);
  if (cfg.pixel_clamp) clamp_to_box(x, delta);
  if (observer) observer(0, delta);
  const float step = to_unit(cfg.step), eps = to_unit(cfg.eps);
  for (int k = 1; k <= cfg.iters; ++k) {
    Tensor<float> grad = model.input_gradient(apply_perturbation(x, delta), targets);
    if (!grad.all_finite()) throw AttackError("non-finite input gradient at iteration " + std::to_string(k));
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += step * sign(grad[i]);
    if (cfg.clips_to_ball()) clip_to_ball(delta, eps);
    if (cfg.pixel_clamp) clamp_to_box(x, delta);
    if (observer) observer(k, delta);
  }
  return delta;
}

Tensor<float> run(Classifier& model, const Tensor<float>& x, const Tensor<float>& targets,
                  const AttackConfig& cfg, std::size_t first_index, const AttackObserver& observer) {
  cfg.validate();
  if (x.rank() != 4) throw ConfigError("attacks expect N x C x H x W input, got " + shape_string(x.shape()));
  if (targets.rank() != 2 || targets.dim(0) != x.dim(0) || targets.dim(1) != model.classes()) {
    throw ConfigError("attack targets must be " + std::to_string(x.dim(0)) + " x " +
                      std::to_string(model.classes()) + ", got " + shape_string(targets.shape()));
  }
  Tensor<float> best = run_once(model, x, targets, cfg, cfg.seed, first_index, observer);
  if (cfg.restarts == 1) return best;

  // Keep, per sample, the restart with the highest loss.
  std::vector<float> best_loss;
  model.input_gradient(apply_perturbation(x, best), targets, &best_loss);
  const std::size_t per = x.size() / x.dim(0);
  for (int r = 1; r < cfg.restarts; ++r) {
    const std::uint64_t seed = Rng::derive(cfg.seed, static_cast<std::uint64_t>(r));
    Tensor<float> cand = run_once(model, x, targets, cfg, seed, first_index, observer);
    std::vector<float> loss;
    model.input_gradient(apply_perturbation(x, cand), targets, &loss);
    for (std::size_t i = 0; i < loss.size(); ++i) {
      if (loss[i] > best_loss[i]) {
        best_loss[i] = loss[i];
        std::copy_n(cand.ptr() + i * per, per, best.ptr() + i * per);
      }
    }
  }
  return best;
}

}  // namespace

std::string_view family_token(AttackFamily family) {
  switch (family) {
    case AttackFamily::Fgsm: return "fgsm";
    case AttackFamily::RfgsmClassical: return "rfgsm";
    case AttackFamily::RfgsmProposed: return "rfgsm+";
    case AttackFamily::Bim: return "bim";
    case AttackFamily::Pgd: return "pgd";
  }
  return "?";
}

AttackConfig AttackConfig::defaults(AttackFamily family, double eps) {
  AttackConfig c;
  c.family = family;
  c.eps = eps;
  switch (family) {
    case AttackFamily::Fgsm:
      c.iters = 1, c.step = eps, c.random_init = false;
      break;
    case AttackFamily::RfgsmClassical:
    case AttackFamily::RfgsmProposed:
      c.iters = 1, c.step = eps, c.random_init = true;
      break;
    case AttackFamily::Bim:
      c.iters = 10, c.step = eps / 4, c.random_init = false;
      break;
    case AttackFamily::Pgd:
      c.iters = 20, c.step = eps / 4, c.random_init = true;
      break;
  }
  return c;
}

AttackConfig AttackConfig::parse(std::string_view text) {
  const auto colon = text.find(':');
  const AttackFamily family = parse_family(text.substr(0, colon));
  std::vector<std::pair<std::string_view, std::string_view>> options;
  if (colon != std::string_view::npos) {
    std::string_view rest = text.substr(colon + 1);
    if (rest.empty()) throw ConfigError("attack '" + std::string(text) + "': empty option list");
    while (true) {
      const auto comma = rest.find(',');
      const std::string_view item = rest.substr(0, comma);
      const auto eq = item.find('=');
      if (eq == std::string_view::npos || eq == 0) {
        throw ConfigError("attack option '" + std::string(item) + "' is not key=value");
      }
      options.emplace_back(item.substr(0, eq), item.substr(eq + 1));
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
  }
  double eps = 8.0;
  for (const auto& [k, v] : options) {
    if (k == "eps") eps = parse_number(k, v);
  }
  AttackConfig c = defaults(family, eps);
  std::vector<std::string_view> seen;
  for (const auto& [k, v] : options) {
    for (auto s : seen) {
      if (s == k) throw ConfigError("attack option '" + std::string(k) + "' given twice");
    }
    seen.push_back(k);
    if (k == "eps") {
      continue;
    } else if (k == "k") {
      const long long iters = parse_integer(k, v);
      if (iters < 1 || iters > 1000000) throw ConfigError("attack k must be in [1, 1e6]");
      c.iters = static_cast<int>(iters);
    } else if (k == "step") {
      c.step = parse_number(k, v);
    } else if (k == "sigma") {
      c.sigma = parse_number(k, v);
    } else if (k == "init") {
      c.random_init = parse_flag(k, v);
    } else if (k == "clamp") {
      c.pixel_clamp = parse_flag(k, v);
    } else if (k == "seed") {
      const long long s = parse_integer(k, v);
      if (s < 0) throw ConfigError("attack seed must be non-negative");
      c.seed = static_cast<std::uint64_t>(s);
    } else if (k == "restarts") {
      const long long r = parse_integer(k, v);
      if (r < 1 || r > 1000) throw ConfigError("attack restarts must be in [1, 1000]");
      c.restarts = static_cast<int>(r);
    } else {
      throw ConfigError("unknown attack option '" + std::string(k) + "'");
    }
  }
  c.validate();
  return c;
}

std::string AttackConfig::to_string() const {
  std::string s(family_token(family));
  s += ":k=" + std::to_string(iters) + ",eps=" + format_number(eps) + ",step=" + format_number(step);
  if (sigma) s += ",sigma=" + format_number(*sigma);
  s += ",init=" + std::string(random_init ? "1" : "0");
  s += ",clamp=" + std::string(pixel_clamp ? "1" : "0");
  s += ",seed=" + std::to_string(seed);
  if (restarts != 1) s += ",restarts=" + std::to_string(restarts);
  return s;
}

void AttackConfig::validate() const {
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw ConfigError("attack eps must be >= 0");
  if (!(step >= 0.0) || !std::isfinite(step)) throw ConfigError("attack step must be >= 0");
  if (sigma && (!(*sigma >= 0.0) || !std::isfinite(*sigma))) throw ConfigError("attack sigma must be >= 0");
  if (sigma && family != AttackFamily::RfgsmProposed) {
    throw ConfigError("sigma applies only to rfgsm+");
  }
  if (iters < 1) throw ConfigError("attack k must be >= 1");
  if (single_step(family) && iters != 1) {
    throw ConfigError(std::string(family_token(family)) + " is single-step; k must be 1");
  }
  if (restarts < 1) throw ConfigError("attack restarts must be >= 1");
}

Tensor<float> WrnClassifier::logits(const Tensor<float>& x) { return model_.logits(x, mode_); }

Tensor<float> WrnClassifier::input_gradient(const Tensor<float>& x, const Tensor<float>& targets,
                                            std::vector<float>* losses) {
  Tape<float> tape;
  Var in = tape.leaf("input", x);
  Var z = model_.forward(tape, in, mode_, false);
  if (losses) *losses = cross_entropy_per_sample(tape.value(z), targets);
  Var loss = ops::softmax_cross_entropy(tape, z, targets, Reduction::Sum);
  GradientMap<float> grads = tape.backward(loss);
  if (counter_) ++*counter_;
  return std::move(grads.at("input"));
}

Tensor<float> perturb(Classifier& model, const Tensor<float>& x, const std::vector<int>& labels,
                      const AttackConfig& cfg, std::size_t first_index,
                      const AttackObserver& observer) {
  if (x.rank() == 0 || labels.size() != x.dim(0)) {
    throw ConfigError("attack needs one label per sample");
  }
  return run(model, x, one_hot<float>(labels, model.classes()), cfg, first_index, observer);
}

Tensor<float> perturb_soft(Classifier& model, const Tensor<float>& x, const Tensor<float>& targets,
                           const AttackConfig& cfg, std::size_t first_index,
                           const AttackObserver& observer) {
  return run(model, x, targets, cfg, first_index, observer);
}

Tensor<float> apply_perturbation(const Tensor<float>& x, const Tensor<float>& delta) {
  if (x.shape() != delta.shape()) throw ConfigError("perturbation shape mismatch");
  Tensor<float> out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += delta[i];
  return out;
}

void clamp_to_box(const Tensor<float>& x, Tensor<float>& delta) {
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const float lo = -x[i];
    float hi = 1.0f - x[i];
    // 1 - x can round up so that x + (1 - x) lands one ulp above 1.
    while (x[i] + hi > 1.0f) hi = std::nextafter(hi, -std::numeric_limits<float>::infinity());
    delta[i] = std::min(std::max(delta[i], lo), hi);
  }
}

void clip_to_ball(Tensor<float>& delta, float eps) {
  for (auto& d : delta.data()) d = std::min(std::max(d, -eps), eps);
}

}  // namespace advnet
