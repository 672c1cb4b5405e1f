#include "advnet/model.hpp"

#include <charconv>
#include <cmath>

#include "advnet/rng.hpp"

namespace advnet {
namespace {

std::uint64_t name_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool is_meta(std::string_view name) { return name.find(".cond.") != std::string_view::npos; }

struct LayoutBuilder {
  std::vector<ParameterShape> params;
  std::vector<std::string> norms;  // batchnorm layer prefixes
  void add(std::string name, Shape shape) { params.push_back({std::move(name), std::move(shape)}); }
  void bn(const std::string& prefix, std::size_t c) {
    add(prefix + ".gamma", {c});
    add(prefix + ".beta", {c});
    norms.push_back(prefix);
  }
};

struct BlockPlan {
  std::string prefix;
  std::size_t in, out, stride;
  bool conditional, projection;
};

std::vector<BlockPlan> plan_blocks(const WrnSpec& spec) {
  std::vector<BlockPlan> plan;
  std::size_t prev = 16;
  const auto widths = spec.group_widths();
  for (int g = 0; g < 3; ++g) {
    const auto out = static_cast<std::size_t>(widths[static_cast<std::size_t>(g)]);
    for (int b = 0; b < spec.blocks_per_group(); ++b) {
      BlockPlan p;
      p.prefix = "group" + std::to_string(g + 1) + ".block" + std::to_string(b);
      p.in = b == 0 ? prev : out;
      p.out = out;
      p.stride = (g > 0 && b == 0) ? 2 : 1;
      p.conditional = spec.adaptive && b == 0;
      p.projection = p.in != p.out || p.stride != 1;
      plan.push_back(std::move(p));
    }
    prev = out;
  }
  return plan;
}

LayoutBuilder build(const WrnSpec& spec) {
  spec.validate();
  LayoutBuilder l;
  const auto ch = static_cast<std::size_t>(spec.input_channels);
  const auto meta = static_cast<std::size_t>(16 * spec.widen);
  l.add("stem.weight", {16, ch, 3, 3});
  for (const BlockPlan& b : plan_blocks(spec)) {
    l.bn(b.prefix + ".bn1", b.in);
    l.add(b.prefix + ".conv1.weight", {b.out, b.in, 3, 3});
    if (b.conditional) {
      l.add(b.prefix + ".cond.conv_a.weight", {meta, b.out, 3, 3});
      l.add(b.prefix + ".cond.conv_a.bias", {meta});
      l.add(b.prefix + ".cond.conv_b.weight", {meta, meta, 3, 3});
      l.add(b.prefix + ".cond.conv_b.bias", {meta});
      l.add(b.prefix + ".cond.conv_out.weight", {2 * b.out, meta, 1, 1});
      l.add(b.prefix + ".cond.conv_out.bias", {2 * b.out});
    }
    l.bn(b.prefix + ".bn2", b.out);
    l.add(b.prefix + ".conv2.weight", {b.out, b.out, 3, 3});
    if (b.projection) l.add(b.prefix + ".shortcut.weight", {b.out, b.in, 1, 1});
  }
  const auto top = static_cast<std::size_t>(64 * spec.widen);
  l.bn("head.bn", top);
  l.add("head.fc.weight", {top, static_cast<std::size_t>(spec.classes)});
  l.add("head.fc.bias", {static_cast<std::size_t>(spec.classes)});
  return l;
}

}  // namespace

void WrnSpec::validate() const {
  if (depth < 10 || (depth - 4) % 6 != 0) {
    throw ConfigError("depth " + std::to_string(depth) +
                      " violates depth = 6 * blocks_per_group + 4 with blocks_per_group >= 1");
  }
  if (widen < 1) throw ConfigError("widening factor must be >= 1, got " + std::to_string(widen));
  if (classes < 2) throw ConfigError("classes must be >= 2, got " + std::to_string(classes));
  if (input_channels < 1) throw ConfigError("input_channels must be >= 1");
  if (input_size < 4) throw ConfigError("input_size must be >= 4, got " + std::to_string(input_size));
}

std::string WrnSpec::arch() const {
  return "wrn-" + std::to_string(depth) + "-" + std::to_string(widen) +
         (adaptive ? "-adaptive" : "");
}

WrnSpec WrnSpec::from_arch(std::string_view arch, int classes, int input_channels,
                           int input_size) {
  auto fail = [&](const std::string& why) -> ConfigError {
    return ConfigError("invalid architecture '" + std::string(arch) + "': " + why +
                       " (expected wrn-<depth>-<widen>[-adaptive])");
  };
  if (arch.substr(0, 4) != "wrn-") throw fail("missing 'wrn-' prefix");
  std::string_view rest = arch.substr(4);
  WrnSpec spec;
  spec.classes = classes;
  spec.input_channels = input_channels;
  spec.input_size = input_size;
  auto parse_int = [&](std::string_view& s, int& out) {
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    if (ec != std::errc() || ptr == s.data()) throw fail("expected an integer");
    s.remove_prefix(static_cast<std::size_t>(ptr - s.data()));
  };
  parse_int(rest, spec.depth);
  if (rest.empty() || rest.front() != '-') throw fail("missing widening factor");
  rest.remove_prefix(1);
  parse_int(rest, spec.widen);
  if (rest == "-adaptive") {
    spec.adaptive = true;
  } else if (!rest.empty()) {
    throw fail("unexpected suffix '" + std::string(rest) + "'");
  }
  spec.validate();
  return spec;
}

std::vector<ParameterShape> parameter_layout(const WrnSpec& spec) { return build(spec).params; }

std::size_t param_count(const WrnSpec& spec) {
  std::size_t n = 0;
  for (const auto& p : parameter_layout(spec)) n += shape_size(p.shape);
  return n;
}

template <typename T>
Var cond_norm_forward(Tape<T>& tape, Var x, const CondNormVars& m) {
  const Tensor<T>& in = tape.value(x);
  if (in.rank() != 4) throw ConfigError("conditional normalization expects N x C x H x W input");
  const std::size_t C = in.dim(1);
  const Tensor<T>& wa = tape.value(m.conv_a_weight);
  const Tensor<T>& wo = tape.value(m.out_weight);
  if (wa.rank() != 4 || wa.dim(1) != C || wo.rank() != 4 || wo.dim(0) != 2 * C) {
    throw ConfigError("conditional normalization: feature maps have " + std::to_string(C) +
                      " channels but the module expects " +
                      std::to_string(wa.rank() == 4 ? wa.dim(1) : 0) + " in / " +
                      std::to_string(wo.rank() == 4 ? wo.dim(0) / 2 : 0) + " out");
  }
  Var a = ops::relu(tape, ops::conv2d(tape, x, m.conv_a_weight, m.conv_a_bias, 1, 1));
  Var b = ops::relu(tape, ops::conv2d(tape, a, m.conv_b_weight, m.conv_b_bias, 1, 1));
  Var r = ops::conv2d(tape, b, m.out_weight, m.out_bias, 1, 0);
  return ops::modulate(tape, x, ops::global_avg_pool(tape, r));
}

template <typename T>
Wrn<T>::Wrn(WrnSpec spec, std::uint64_t seed, BatchNormSettings bn) : spec_(spec), bn_(bn) {
  build_layout();
  initialize(seed);
}

template <typename T>
template <typename U>
Wrn<T>::Wrn(const Wrn<U>& other) : spec_(other.spec_), bn_(other.bn_) {
  for (const auto& e : other.params_) params_.add(e.name, e.value.template cast<T>());
  for (const auto& [name, s] : other.stats_) {
    RunningStats<T> r;
    r.mean = s.mean.template cast<T>();
    r.variance = s.variance.template cast<T>();
    r.initialized = s.initialized;
    stats_.emplace_back(name, std::move(r));
  }
  for (const auto& b : other.blocks_) {
    blocks_.push_back({b.prefix, b.in_channels, b.out_channels, b.stride, b.conditional,
                       b.projection});
  }
  input_mean_.assign(other.input_mean_.begin(), other.input_mean_.end());
  input_std_.assign(other.input_std_.begin(), other.input_std_.end());
}

template <typename T>
void Wrn<T>::build_layout() {
  LayoutBuilder l = build(spec_);
  for (auto& p : l.params) params_.add(p.name, Tensor<T>(p.shape));
  for (const auto& prefix : l.norms) {
    stats_.emplace_back(prefix, RunningStats<T>(params_.at(prefix + ".gamma").size()));
  }
  for (auto& b : plan_blocks(spec_)) {
    blocks_.push_back({b.prefix, b.in, b.out, b.stride, b.conditional, b.projection});
  }
  input_mean_.assign(static_cast<std::size_t>(spec_.input_channels), T{0});
  input_std_.assign(static_cast<std::size_t>(spec_.input_channels), T{1});
}

// He fan-in normal weights, zero biases, unit BN scale. Every parameter draws
// from its own stream keyed by name, so adaptive and non-adaptive models with
// one seed share their backbone. The modulation output conv starts at zero
// (nu = 1, mu = 0).
template <typename T>
void Wrn<T>::initialize(std::uint64_t seed) {
  for (auto& [name, value] : params_) {
    if (ends_with(name, ".gamma")) {
      value.fill(T{1});
    } else if (ends_with(name, ".weight") && name.find("cond.conv_out") == std::string::npos) {
      const std::size_t fan_in =
          value.rank() == 2 ? value.dim(0) : value.size() / value.dim(0);
      const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
      Rng rng(Rng::derive(seed, name_hash(name)));
      for (auto& v : value.data()) v = static_cast<T>(rng.normal(0.0, stddev));
    } else {
      value.fill(T{0});
    }
  }
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> Wrn<T>::running_tensors() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  for (auto& [name, s] : stats_) {
    out.emplace_back(name + ".running_mean", &s.mean);
    out.emplace_back(name + ".running_var", &s.variance);
  }
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> Wrn<T>::running_tensors() const {
  std::vector<std::pair<std::string, const Tensor<T>*>> out;
  for (const auto& [name, s] : stats_) {
    out.emplace_back(name + ".running_mean", &s.mean);
    out.emplace_back(name + ".running_var", &s.variance);
  }
  return out;
}

template <typename T>
bool Wrn<T>::statistics_ready() const {
  for (const auto& [name, s] : stats_) {
    if (!s.initialized) return false;
  }
  return true;
}

template <typename T>
void Wrn<T>::mark_statistics_ready(bool ready) {
  for (auto& [name, s] : stats_) s.initialized = ready;
}

template <typename T>
void Wrn<T>::set_input_normalization(std::vector<T> mean, std::vector<T> stddev) {
  const auto c = static_cast<std::size_t>(spec_.input_channels);
  if (mean.size() != c || stddev.size() != c) {
    throw ConfigError("input normalization needs " + std::to_string(c) + " channels");
  }
  for (T s : stddev) {
    if (!(s > T{0})) throw ConfigError("input normalization std must be positive");
  }
  input_mean_ = std::move(mean);
  input_std_ = std::move(stddev);
}

template <typename T>
typename Wrn<T>::ParameterVars Wrn<T>::register_parameters(Tape<T>& tape, bool requires_grad) const {
  ParameterVars vars;
  for (const auto& e : params_) vars.emplace(e.name, tape.leaf(e.name, e.value, requires_grad));
  return vars;
}

template <typename T>
Var Wrn<T>::forward(Tape<T>& tape, Var input, NormMode mode, bool param_grads) {
  return forward(tape, input, mode, register_parameters(tape, param_grads));
}

template <typename T>
Var Wrn<T>::forward(Tape<T>& tape, Var input, NormMode mode, const ParameterVars& vars) {
  const Tensor<T>& x = tape.value(input);
  if (x.rank() != 4 || x.dim(1) != static_cast<std::size_t>(spec_.input_channels)) {
    throw ConfigError("model " + spec_.arch() + " expects N x " +
                      std::to_string(spec_.input_channels) + " x H x W input, got " +
                      shape_string(x.shape()));
  }
  auto p = [&](const std::string& name) {
    auto it = vars.find(name);
    if (it == vars.end()) throw UsageError("parameter '" + name + "' was not registered on the tape");
    return it->second;
  };
  std::size_t norm_index = 0;
  auto bn = [&](Var h, const std::string& prefix) {
    auto& stats = stats_[norm_index++].second;
    return ops::batchnorm(tape, h, p(prefix + ".gamma"), p(prefix + ".beta"), stats, mode, bn_);
  };

  Var h = ops::channel_standardize(tape, input, input_mean_, input_std_);
  h = ops::conv2d(tape, h, p("stem.weight"), Var{}, 1, 1);
  for (const BlockLayout& b : blocks_) {
    Var o = ops::relu(tape, bn(h, b.prefix + ".bn1"));
    Var shortcut =
        b.projection ? ops::conv2d(tape, o, p(b.prefix + ".shortcut.weight"), Var{}, b.stride, 0)
                     : h;
    Var c = ops::conv2d(tape, o, p(b.prefix + ".conv1.weight"), Var{}, b.stride, 1);
    if (b.conditional) {
      const std::string m = b.prefix + ".cond.";
      CondNormVars cond{p(m + "conv_a.weight"),   p(m + "conv_a.bias"),
                        p(m + "conv_b.weight"),   p(m + "conv_b.bias"),
                        p(m + "conv_out.weight"), p(m + "conv_out.bias")};
      c = cond_norm_forward(tape, c, cond);
    }
    c = ops::relu(tape, bn(c, b.prefix + ".bn2"));
    c = ops::conv2d(tape, c, p(b.prefix + ".conv2.weight"), Var{}, 1, 1);
    h = ops::add(tape, c, shortcut);
  }
  h = ops::relu(tape, bn(h, "head.bn"));
  Var pooled = ops::global_avg_pool(tape, h);
  return ops::dense(tape, pooled, p("head.fc.weight"), p("head.fc.bias"));
}

template <typename T>
Tensor<T> Wrn<T>::logits(const Tensor<T>& input, NormMode mode) {
  Tape<T> tape;
  Var in = tape.constant(input);
  Var out = forward(tape, in, mode, false);
  return tape.value(out);
}

template <typename T>
std::vector<std::string> Wrn<T>::meta_parameter_names() const {
  std::vector<std::string> out;
  for (const auto& e : params_) {
    if (is_meta(e.name)) out.push_back(e.name);
  }
  return out;
}

template <typename T>
void Wrn<T>::copy_backbone_from(const Wrn& other) {
  for (auto& [name, value] : params_) {
    if (is_meta(name)) continue;
    const Tensor<T>* src = other.params_.find(name);
    if (!src || src->shape() != value.shape()) {
      throw ConfigError("backbone parameter '" + name + "' missing or mismatched in source model");
    }
    value = *src;
  }
  if (other.stats_.size() != stats_.size()) throw ConfigError("backbone normalization layers differ");
  for (std::size_t i = 0; i < stats_.size(); ++i) stats_[i].second = other.stats_[i].second;
  input_mean_ = other.input_mean_;
  input_std_ = other.input_std_;
}

template Var cond_norm_forward(Tape<float>&, Var, const CondNormVars&);
template Var cond_norm_forward(Tape<double>&, Var, const CondNormVars&);
template class Wrn<float>;
template class Wrn<double>;
template Wrn<double>::Wrn(const Wrn<float>&);
template Wrn<float>::Wrn(const Wrn<double>&);

}  // namespace advnet
