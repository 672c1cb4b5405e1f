#include "advnet/config.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "advnet/error.hpp"

namespace advnet {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

struct Entry {
  std::string value;
  std::size_t line;
};

class Fields {
 public:
  explicit Fields(std::map<std::string, Entry> m) : m_(std::move(m)) {}

  bool has(const std::string& k) const { return m_.count(k) != 0; }

  const Entry* find(const std::string& k) const {
    auto it = m_.find(k);
    return it == m_.end() ? nullptr : &it->second;
  }

  [[noreturn]] void fail(const std::string& k, const std::string& why) const {
    const Entry* e = find(k);
    throw ConfigError("line " + std::to_string(e ? e->line : 0) + ": key '" + k + "': " + why);
  }

  void number(const std::string& k, double& out) const {
    if (const Entry* e = find(k)) {
      double v = 0;
      auto [p, ec] = std::from_chars(e->value.data(), e->value.data() + e->value.size(), v);
      if (ec != std::errc() || p != e->value.data() + e->value.size() || !std::isfinite(v)) {
        fail(k, "expected a number, got '" + e->value + "'");
      }
      out = v;
    }
  }

  template <typename I>
  void integer(const std::string& k, I& out, long long lo, long long hi) const {
    if (const Entry* e = find(k)) {
      long long v = 0;
      auto [p, ec] = std::from_chars(e->value.data(), e->value.data() + e->value.size(), v);
      if (ec != std::errc() || p != e->value.data() + e->value.size()) {
        fail(k, "expected an integer, got '" + e->value + "'");
      }
      if (v < lo || v > hi) fail(k, "value " + e->value + " out of range");
      out = static_cast<I>(v);
    }
  }

  void flag(const std::string& k, bool& out) const {
    if (const Entry* e = find(k)) {
      if (e->value == "true" || e->value == "1") {
        out = true;
      } else if (e->value == "false" || e->value == "0") {
        out = false;
      } else {
        fail(k, "expected true/false, got '" + e->value + "'");
      }
    }
  }

  void text(const std::string& k, std::string& out) const {
    if (const Entry* e = find(k)) out = e->value;
  }

  void int_list(const std::string& k, std::vector<int>& out) const {
    const Entry* e = find(k);
    if (!e) return;
    out.clear();
    std::string_view rest = e->value;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const std::string_view item = trim(rest.substr(0, comma));
      int v = 0;
      auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (item.empty() || ec != std::errc() || p != item.data() + item.size()) {
        fail(k, "expected a comma-separated list of integers");
      }
      out.push_back(v);
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
  }

 private:
  std::map<std::string, Entry> m_;
};

const char* const kKeys[] = {
    "depth", "widen", "adaptive", "classes", "input_channels", "input_size",
    "objective", "epochs", "batch_size", "lr", "decay_milestones", "decay_factor", "momentum",
    "weight_decay", "kappa", "m", "lambda_inv", "init_checkpoint", "seed", "augment",
    "report_timing", "robust_eval_every", "checkpoint_prefix",
    "attack_family", "attack_eps", "attack_step", "attack_iters", "attack_sigma",
    "attack_random_init", "attack_pixel_clamp", "attack_seed", "attack_restarts",
    "train_data", "val_data", "report", "normalize_inputs"};

AttackFamily family_from_token(std::string_view token) {
  return AttackConfig::parse(token).family;
}

std::map<std::string, std::string> parse_options(std::string_view list, std::string_view source) {
  std::map<std::string, std::string> out;
  while (!list.empty()) {
    const auto comma = list.find(',');
    const std::string_view item = list.substr(0, comma);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos || eq == 0) {
      throw ConfigError("data source '" + std::string(source) + "': option '" + std::string(item) +
                        "' is not key=value");
    }
    if (!out.emplace(std::string(item.substr(0, eq)), std::string(item.substr(eq + 1))).second) {
      throw ConfigError("data source '" + std::string(source) + "': duplicate option");
    }
    if (comma == std::string_view::npos) break;
    list = list.substr(comma + 1);
  }
  return out;
}

long long option_int(const std::map<std::string, std::string>& o, const char* key, long long fallback,
                     long long lo, long long hi) {
  auto it = o.find(key);
  if (it == o.end()) return fallback;
  long long v = 0;
  auto [p, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
  if (ec != std::errc() || p != it->second.data() + it->second.size() || v < lo || v > hi) {
    throw ConfigError(std::string("data option '") + key + "' has invalid value '" + it->second + "'");
  }
  return v;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  std::map<std::string, Entry> raw;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    ++line_no;
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ParseError(line_no, "missing key before '='");
    bool known = false;
    for (const char* k : kKeys) known = known || key == k;
    if (!known) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (!raw.emplace(key, Entry{value, line_no}).second) {
      throw ConfigError("line " + std::to_string(line_no) + ": key '" + key + "' given twice");
    }
  }

  const Fields f(std::move(raw));
  ExperimentConfig c;
  f.integer("depth", c.model.depth, 1, 1000);
  f.integer("widen", c.model.widen, 1, 64);
  f.flag("adaptive", c.model.adaptive);
  f.integer("classes", c.model.classes, 2, 100000);
  f.integer("input_channels", c.model.input_channels, 1, 64);
  f.integer("input_size", c.model.input_size, 4, 4096);
  try {
    c.model.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }

  TrainConfig& t = c.train;
  if (const Entry* e = f.find("objective")) {
    try {
      t.objective = parse_objective(e->value);
    } catch (const ConfigError& err) {
      f.fail("objective", err.what());
    }
  }
  f.integer("epochs", t.epochs, 0, 100000);
  f.integer("batch_size", t.batch_size, 1, 1 << 20);
  f.number("lr", t.lr);
  f.int_list("decay_milestones", t.decay_milestones);
  f.number("decay_factor", t.decay_factor);
  f.number("momentum", t.momentum);
  f.number("weight_decay", t.weight_decay);
  f.number("kappa", t.kappa);
  f.integer("m", t.m, 1, 100000);
  f.number("lambda_inv", t.lambda_inv);
  if (const Entry* e = f.find("init_checkpoint")) {
    t.init_checkpoint = e->value.empty() ? std::nullopt : std::optional<std::string>(e->value);
  }
  f.integer("seed", t.seed, 0, std::numeric_limits<long long>::max());
  f.flag("augment", t.augment);
  f.flag("report_timing", t.report_timing);
  f.integer("robust_eval_every", t.robust_eval_every, 0, 100000);
  f.text("checkpoint_prefix", t.checkpoint_prefix);

  // Attack keys start from the family defaults at the configured eps.
  AttackFamily family = t.attack.family;
  if (const Entry* e = f.find("attack_family")) {
    try {
      family = family_from_token(e->value);
    } catch (const ConfigError& err) {
      f.fail("attack_family", err.what());
    }
  }
  double eps = t.attack.eps;
  f.number("attack_eps", eps);
  AttackConfig a = AttackConfig::defaults(family, eps);
  f.number("attack_step", a.step);
  f.integer("attack_iters", a.iters, 1, 1000000);
  if (const Entry* e = f.find("attack_sigma")) {
    if (e->value.empty()) {
      a.sigma.reset();
    } else {
      double s = 0;
      f.number("attack_sigma", s);
      a.sigma = s;
    }
  }
  f.flag("attack_random_init", a.random_init);
  f.flag("attack_pixel_clamp", a.pixel_clamp);
  f.integer("attack_seed", a.seed, 0, std::numeric_limits<long long>::max());
  f.integer("attack_restarts", a.restarts, 1, 1000);
  t.attack = a;

  f.text("train_data", c.train_data);
  f.text("val_data", c.val_data);
  f.text("report", c.report);
  f.flag("normalize_inputs", c.normalize_inputs);
  t.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  const Bytes b = read_file(path);
  return parse_config(std::string_view(reinterpret_cast<const char*>(b.data()), b.size()));
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream o;
  auto flag = [](bool v) { return v ? "true" : "false"; };
  const TrainConfig& t = c.train;
  const AttackConfig& a = t.attack;
  o << "# model\n";
  o << "depth = " << c.model.depth << "\n";
  o << "widen = " << c.model.widen << "\n";
  o << "adaptive = " << flag(c.model.adaptive) << "\n";
  o << "classes = " << c.model.classes << "\n";
  o << "input_channels = " << c.model.input_channels << "\n";
  o << "input_size = " << c.model.input_size << "\n";
  o << "# training\n";
  o << "objective = " << objective_token(t.objective) << "\n";
  o << "epochs = " << t.epochs << "\n";
  o << "batch_size = " << t.batch_size << "\n";
  o << "lr = " << fmt(t.lr) << "\n";
  o << "decay_milestones = ";
  for (std::size_t i = 0; i < t.decay_milestones.size(); ++i) o << (i ? "," : "") << t.decay_milestones[i];
  o << "\n";
  o << "decay_factor = " << fmt(t.decay_factor) << "\n";
  o << "momentum = " << fmt(t.momentum) << "\n";
  o << "weight_decay = " << fmt(t.weight_decay) << "\n";
  o << "kappa = " << fmt(t.kappa) << "\n";
  o << "m = " << t.m << "\n";
  o << "lambda_inv = " << fmt(t.lambda_inv) << "\n";
  o << "init_checkpoint = " << t.init_checkpoint.value_or("") << "\n";
  o << "seed = " << t.seed << "\n";
  o << "augment = " << flag(t.augment) << "\n";
  o << "report_timing = " << flag(t.report_timing) << "\n";
  o << "robust_eval_every = " << t.robust_eval_every << "\n";
  o << "checkpoint_prefix = " << t.checkpoint_prefix << "\n";
  o << "# inner attack\n";
  o << "attack_family = " << family_token(a.family) << "\n";
  o << "attack_eps = " << fmt(a.eps) << "\n";
  o << "attack_step = " << fmt(a.step) << "\n";
  o << "attack_iters = " << a.iters << "\n";
  o << "attack_sigma = " << (a.sigma ? fmt(*a.sigma) : "") << "\n";
  o << "attack_random_init = " << flag(a.random_init) << "\n";
  o << "attack_pixel_clamp = " << flag(a.pixel_clamp) << "\n";
  o << "attack_seed = " << a.seed << "\n";
  o << "attack_restarts = " << a.restarts << "\n";
  o << "# data and outputs\n";
  o << "train_data = " << c.train_data << "\n";
  o << "val_data = " << c.val_data << "\n";
  o << "report = " << c.report << "\n";
  o << "normalize_inputs = " << flag(c.normalize_inputs) << "\n";
  return o.str();
}

Dataset load_data(std::string_view source) {
  const auto colon = source.find(':');
  if (colon == std::string_view::npos) {
    throw ConfigError("data source '" + std::string(source) + "' lacks a '<kind>:' prefix");
  }
  const std::string_view kind = source.substr(0, colon), rest = source.substr(colon + 1);
  if (kind == "synth") {
    const auto comma = rest.find(',');
    const std::string_view shape = rest.substr(0, comma);
    SynthSpec s;
    if (shape == "blobs") {
      s.kind = SynthKind::Blobs;
    } else if (shape == "rings") {
      s.kind = SynthKind::Rings;
    } else {
      throw ConfigError("synthetic data kind must be blobs or rings, got '" + std::string(shape) + "'");
    }
    const auto o = parse_options(comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1), source);
    for (const auto& [k, v] : o) {
      if (k != "n" && k != "noise" && k != "seed" && k != "size" && k != "classes" &&
          k != "contrast") {
        throw ConfigError("unknown synthetic data option '" + k + "'");
      }
    }
    s.n = static_cast<std::size_t>(option_int(o, "n", 512, 1, 10000000));
    s.seed = static_cast<std::uint64_t>(option_int(o, "seed", 0, 0, std::numeric_limits<long long>::max()));
    s.image_size = static_cast<int>(option_int(o, "size", 16, 1, 1024));
    s.classes = static_cast<int>(option_int(o, "classes", 4, 2, 256));
    for (auto [key, field] : {std::pair{"noise", &s.noise}, std::pair{"contrast", &s.contrast}}) {
      if (auto it = o.find(key); it != o.end()) {
        double v = 0;
        auto [p, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
        if (ec != std::errc() || p != it->second.data() + it->second.size()) {
          throw ConfigError("synthetic " + std::string(key) + " must be a number");
        }
        *field = v;
      }
    }
    return synth_dataset(s);
  }
  if (kind == "idx") {
    const auto comma = rest.find(',');
    if (comma == std::string_view::npos) throw ConfigError("idx source needs '<images>,<labels>'");
    const std::string images(rest.substr(0, comma));
    std::string_view tail = rest.substr(comma + 1);
    const auto comma2 = tail.find(',');
    const std::string labels(tail.substr(0, comma2));
    const auto o = parse_options(comma2 == std::string_view::npos ? std::string_view{} : tail.substr(comma2 + 1), source);
    for (const auto& [k, v] : o) {
      if (k != "classes") throw ConfigError("unknown idx option '" + k + "'");
    }
    return load_idx(images, labels, static_cast<int>(option_int(o, "classes", 10, 2, 256)));
  }
  if (kind == "cifar10" || kind == "cifar100") {
    std::vector<std::string> paths;
    std::string_view list = rest;
    while (!list.empty()) {
      const auto semi = list.find(';');
      paths.emplace_back(list.substr(0, semi));
      if (semi == std::string_view::npos) break;
      list = list.substr(semi + 1);
    }
    return load_cifar_binary(paths, kind == "cifar10" ? 1 : 2);
  }
  throw ConfigError("unknown data source kind '" + std::string(kind) + "' (synth, idx, cifar10, cifar100)");
}

}  // namespace advnet
