#include "advnet/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "advnet/error.hpp"

namespace advnet {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'A', 'N', 'C', 'P'};
constexpr std::size_t kMaxName = 4096;

class Writer {
 public:
  template <typename V>
  void put(V v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out_.insert(out_.end(), p, p + sizeof v);
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void put_tensor(const std::string& name, const Tensor<float>& t) {
    put_string(name);
    put(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put(static_cast<std::uint64_t>(d));
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.ptr());
    out_.insert(out_.end(), p, p + t.size() * sizeof(float));
  }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::size_t offset() const { return at_; }
  void need(std::size_t n, const char* what) {
    if (b_.size() - at_ < n) {
      throw ParseError(at_, std::string("truncated checkpoint while reading ") + what + ": need " +
                                std::to_string(n) + " bytes, " + std::to_string(b_.size() - at_) + " left");
    }
  }
  template <typename V>
  V get(const char* what) {
    need(sizeof(V), what);
    V v;
    std::memcpy(&v, b_.data() + at_, sizeof v);
    at_ += sizeof v;
    return v;
  }
  std::string get_string(const char* what, std::size_t limit) {
    const auto n = get<std::uint32_t>(what);
    if (n > limit) throw ParseError(at_ - 4, std::string(what) + " length " + std::to_string(n) + " exceeds " + std::to_string(limit));
    need(n, what);
    std::string s(reinterpret_cast<const char*>(b_.data() + at_), n);
    at_ += n;
    return s;
  }
  // Reads one entry and checks it against the expected name and shape.
  void get_tensor(const std::string& expect_name, Tensor<float>& into) {
    const std::size_t start = at_;
    const std::string name = get_string("entry name", kMaxName);
    if (name != expect_name) {
      throw ParameterMismatchError(expect_name, "expected at offset " + std::to_string(start) +
                                                    ", found entry '" + name + "'");
    }
    const auto rank = get<std::uint32_t>("entry rank");
    if (rank != into.rank()) {
      throw ParameterMismatchError(name, "rank " + std::to_string(rank) + " but model expects " +
                                             std::to_string(into.rank()));
    }
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<std::size_t>(get<std::uint64_t>("entry dims")));
    if (shape != into.shape()) {
      throw ParameterMismatchError(name, "shape " + shape_string(shape) + " but model expects " +
                                             shape_string(into.shape()));
    }
    const std::size_t bytes = into.size() * sizeof(float);
    need(bytes, "entry payload");
    std::memcpy(into.ptr(), b_.data() + at_, bytes);
    at_ += bytes;
  }
  bool done() const { return at_ == b_.size(); }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t at_ = 0;
};

}  // namespace

std::string describe(const WrnSpec& spec) {
  return spec.arch() + "/classes=" + std::to_string(spec.classes) + "/input=" +
         std::to_string(spec.input_channels) + "x" + std::to_string(spec.input_size) + "x" +
         std::to_string(spec.input_size);
}

Bytes encode_checkpoint(const Wrn<float>& model, const ParameterSet<float>* velocity) {
  const WrnSpec& spec = model.spec();
  Writer w;
  for (char c : kMagic) w.put(c);
  w.put(kCheckpointVersion);
  w.put_string(spec.arch());
  w.put(static_cast<std::uint32_t>(spec.classes));
  w.put(static_cast<std::uint32_t>(spec.input_channels));
  w.put(static_cast<std::uint32_t>(spec.input_size));
  w.put(model.batchnorm_settings().epsilon);
  w.put(model.batchnorm_settings().momentum);
  w.put(static_cast<std::uint32_t>(model.input_mean().size()));
  for (float v : model.input_mean()) w.put(v);
  for (float v : model.input_std()) w.put(v);
  w.put(static_cast<std::uint8_t>(model.statistics_ready() ? 1 : 0));

  const auto running = model.running_tensors();
  const std::size_t count = model.parameters().size() * (velocity ? 2 : 1) + running.size();
  w.put(static_cast<std::uint32_t>(count));
  for (const auto& e : model.parameters()) w.put_tensor(e.name, e.value);
  if (velocity) {
    for (const auto& e : model.parameters()) {
      const Tensor<float>* v = velocity->find(e.name);
      if (!v || v->shape() != e.value.shape()) {
        throw ConfigError("optimizer state has no matching velocity for '" + e.name + "'");
      }
      w.put_tensor("velocity/" + e.name, *v);
    }
  }
  for (const auto& [name, t] : running) w.put_tensor(name, *t);
  return w.take();
}

void save_checkpoint(const std::string& path, const Wrn<float>& model, const ParameterSet<float>* velocity) {
  write_file(path, encode_checkpoint(model, velocity));
}

LoadedCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw MagicError("not an ANCP checkpoint (bad magic)");
  r.get<std::uint32_t>("magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw VersionError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  const std::string arch = r.get_string("architecture", 256);
  const auto classes = r.get<std::uint32_t>("classes");
  const auto channels = r.get<std::uint32_t>("input channels");
  const auto size = r.get<std::uint32_t>("input size");
  if (classes > 100000 || channels > 64 || size > 4096) {
    throw ParseError(r.offset(), "implausible model header values");
  }
  WrnSpec spec;
  try {
    spec = WrnSpec::from_arch(arch, int(classes), int(channels), int(size));
    if (spec.depth > 200 || spec.widen > 32) throw ConfigError("architecture too large");
  } catch (const ConfigError& e) {
    throw ParseError(8, std::string("invalid architecture in checkpoint: ") + e.what());
  }
  // Refuse to allocate a model the remaining bytes cannot possibly fill.
  if (param_count(spec) * sizeof(float) > bytes.size()) {
    throw ParseError(r.offset(), arch + " needs more parameter bytes than the file holds");
  }
  BatchNormSettings bn;
  bn.epsilon = r.get<double>("batchnorm epsilon");
  bn.momentum = r.get<double>("batchnorm momentum");
  if (!(bn.epsilon > 0) || !(bn.momentum >= 0 && bn.momentum <= 1)) {
    throw ParseError(r.offset(), "invalid batchnorm settings");
  }
  const auto c = r.get<std::uint32_t>("normalization channels");
  if (c != channels) throw ParseError(r.offset() - 4, "normalization channel count differs from input channels");
  std::vector<float> mean(c), stddev(c);
  for (auto& v : mean) v = r.get<float>("input mean");
  for (auto& v : stddev) v = r.get<float>("input std");
  const auto ready = r.get<std::uint8_t>("statistics flag");
  if (ready > 1) throw ParseError(r.offset() - 1, "statistics flag must be 0 or 1");

  LoadedCheckpoint out{Wrn<float>(spec, 0, bn), std::nullopt};
  try {
    out.model.set_input_normalization(mean, stddev);
  } catch (const ConfigError& e) {
    throw ParseError(r.offset(), e.what());
  }
  const auto count = r.get<std::uint32_t>("entry count");
  const std::size_t params = out.model.parameters().size();
  auto running = out.model.running_tensors();
  if (count != params + running.size() && count != 2 * params + running.size()) {
    throw ParseError(r.offset() - 4, "entry count " + std::to_string(count) + " does not fit " + arch);
  }
  for (auto& e : out.model.parameters()) r.get_tensor(e.name, e.value);
  if (count == 2 * params + running.size()) {
    out.velocity = out.model.parameters().zeros_like();
    for (auto& e : *out.velocity) r.get_tensor("velocity/" + e.name, e.value);
  }
  for (auto& [name, t] : running) r.get_tensor(name, *t);
  if (!r.done()) throw ParseError(r.offset(), "trailing bytes after last entry");
  out.model.mark_statistics_ready(ready == 1);
  return out;
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  const Bytes b = read_file(path);
  try {
    return decode_checkpoint(b);
  } catch (const ParseError& e) {
    throw ParseError(e.offset(), path + ": " + e.what());
  }
}

void load_into(Wrn<float>& model, const std::string& path, std::optional<ParameterSet<float>>* velocity) {
  LoadedCheckpoint loaded = load_checkpoint(path);
  if (!(loaded.model.spec() == model.spec())) {
    throw ArchitectureMismatchError(describe(model.spec()), describe(loaded.model.spec()));
  }
  model = std::move(loaded.model);
  if (velocity) *velocity = std::move(loaded.velocity);
}

}  // namespace advnet
