#include "advnet/evaluation.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "advnet/error.hpp"
#include "advnet/rng.hpp"

namespace advnet {
namespace {

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

void check_input(const Wrn<float>& model, const Dataset& data) {
  if (data.size() == 0) throw ConfigError("evaluation dataset is empty");
  if (data.channels() != std::size_t(model.spec().input_channels)) {
    throw ConfigError("model " + model.spec().arch() + " expects " +
                      std::to_string(model.spec().input_channels) + " input channels but the data has " +
                      std::to_string(data.channels()));
  }
  if (data.classes > model.spec().classes) {
    throw ConfigError("data has " + std::to_string(data.classes) + " classes but the model predicts " +
                      std::to_string(model.spec().classes));
  }
}

std::string_view next_line(std::string_view& text) {
  const auto nl = text.find('\n');
  std::string_view line = text.substr(0, nl);
  text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
  return line;
}

std::string direction_string(const Tensor<float>& d) {
  std::string s;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (i) s += ' ';
    s += d[i] > 0 ? "1" : (d[i] < 0 ? "-1" : "0");
  }
  return s;
}

}  // namespace

std::vector<int> predict(const Tensor<float>& logits) {
  const std::size_t n = logits.dim(0), m = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = logits.ptr() + i * m;
    out[i] = int(std::max_element(row, row + m) - row);
  }
  return out;
}

double natural_accuracy(Wrn<float>& model, const Dataset& data, std::size_t batch) {
  check_input(model, data);
  std::size_t correct = 0;
  for (std::size_t b = 0; b < data.size(); b += batch) {
    const std::size_t e = std::min(data.size(), b + batch);
    const auto pred = predict(model.logits(data.images.slice_rows(b, e), NormMode::Evaluation));
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.labels[b + i];
  }
  return double(correct) / double(data.size());
}

RobustResult robust_accuracy(Wrn<float>& model, const Dataset& data, const AttackConfig& cfg, std::size_t batch) {
  check_input(model, data);
  WrnClassifier clf(model, NormMode::Evaluation);
  std::size_t correct = 0;
  double loss = 0.0;
  for (std::size_t b = 0; b < data.size(); b += batch) {
    const std::size_t e = std::min(data.size(), b + batch);
    const Tensor<float> x = data.images.slice_rows(b, e);
    const std::vector<int> y(data.labels.begin() + std::ptrdiff_t(b), data.labels.begin() + std::ptrdiff_t(e));
    const Tensor<float> delta = perturb(clf, x, y, cfg, b);
    const Tensor<float> z = model.logits(apply_perturbation(x, delta), NormMode::Evaluation);
    const auto pred = predict(z);
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == y[i];
    for (float l : cross_entropy_per_sample(z, one_hot<float>(y, clf.classes()))) loss += l;
  }
  return {double(correct) / double(data.size()), loss / double(data.size())};
}

std::string EvalReport::to_csv() const {
  std::string s = "attack,accuracy,n,seed\n";
  s += "natural," + fmt(natural_accuracy) + "," + std::to_string(n) + "," + std::to_string(seed) + "\n";
  for (const auto& [name, acc] : robust) {
    s += name + "," + fmt(acc) + "," + std::to_string(n) + "," + std::to_string(seed) + "\n";
  }
  return s;
}

EvalReport evaluate(Wrn<float>& model, const Dataset& data, const std::vector<AttackConfig>& attacks,
                    std::uint64_t seed, std::size_t batch) {
  EvalReport r;
  r.n = data.size();
  r.seed = seed;
  r.natural_accuracy = natural_accuracy(model, data, batch);
  for (AttackConfig a : attacks) {
    a.seed = seed;
    // The attack string holds commas; quote it for the CSV.
    r.robust.emplace_back("\"" + a.to_string() + "\"", robust_accuracy(model, data, a, batch).accuracy);
  }
  return r;
}

SurfaceGrid loss_surface(Classifier& model, const Tensor<float>& x, int label, const SurfaceConfig& cfg) {
  if (x.rank() != 4 || x.dim(0) != 1) throw ConfigError("loss surface needs a single 1 x C x H x W sample");
  if (cfg.resolution < 1 || cfg.resolution % 2 == 0) {
    throw ConfigError("surface resolution must be a positive odd number, got " + std::to_string(cfg.resolution));
  }
  if (!(cfg.extent >= 0.0) || !std::isfinite(cfg.extent)) throw ConfigError("surface extent must be >= 0");
  if (label < 0 || std::size_t(label) >= model.classes()) throw ConfigError("surface label out of range");

  SurfaceGrid g;
  g.extent = cfg.extent;
  g.resolution = cfg.resolution;
  g.seed = cfg.seed;
  const Tensor<float> target = one_hot<float>({label}, model.classes());
  const Tensor<float> grad = model.input_gradient(x, target);
  g.d1 = Tensor<float>::zeros_like(x);
  g.d2 = Tensor<float>::zeros_like(x);
  Rng rng(cfg.seed);
  for (std::size_t i = 0; i < x.size(); ++i) {
    g.d1[i] = sign(grad[i]);
    g.d2[i] = float(rng.rademacher());
  }
  const int res = cfg.resolution, half = (res - 1) / 2;
  for (int i = 0; i < res; ++i) {
    // Exactly zero at the center index.
    g.axis.push_back(half == 0 ? 0.0 : cfg.extent * double(i - half) / double(half));
  }

  const std::size_t per = x.size();
  const Tensor<float> targets = one_hot<float>(std::vector<int>(std::size_t(res), label), model.classes());
  g.values.resize(std::size_t(res) * std::size_t(res));
  for (int i = 0; i < res; ++i) {
    Shape shape = x.shape();
    shape[0] = std::size_t(res);
    Tensor<float> row(shape);
    const float a = float(g.axis[std::size_t(i)] / 255.0);
    for (int j = 0; j < res; ++j) {
      const float b = float(g.axis[std::size_t(j)] / 255.0);
      float* out = row.ptr() + std::size_t(j) * per;
      for (std::size_t k = 0; k < per; ++k) {
        out[k] = std::clamp(x[k] + a * g.d1[k] + b * g.d2[k], 0.0f, 1.0f);
      }
    }
    std::vector<float> losses;
    try {
      losses = cross_entropy_per_sample(model.logits(row), targets);
    } catch (const NumericError&) {
      throw NumericError("non-finite loss in surface row " + std::to_string(i));
    }
    for (int j = 0; j < res; ++j) {
      const float l = losses[std::size_t(j)];
      if (!std::isfinite(l)) {
        throw NumericError("non-finite loss at surface cell (" + std::to_string(i) + ", " + std::to_string(j) + ")");
      }
      g.values[std::size_t(i) * std::size_t(res) + std::size_t(j)] = l;
    }
  }
  return g;
}

std::string surface_to_csv(const SurfaceGrid& g) {
  std::string s;
  s += "# extent=" + fmt(g.extent) + "\n";
  s += "# resolution=" + std::to_string(g.resolution) + "\n";
  s += "# seed=" + std::to_string(g.seed) + "\n";
  s += "# shape=" + std::to_string(g.d1.dim(1)) + "x" + std::to_string(g.d1.dim(2)) + "x" +
       std::to_string(g.d1.dim(3)) + "\n";
  s += "# d1=" + direction_string(g.d1) + "\n";
  s += "# d2=" + direction_string(g.d2) + "\n";
  for (int i = 0; i < g.resolution; ++i) {
    for (int j = 0; j < g.resolution; ++j) s += (j ? "," : "") + fmt(g.at(i, j));
    s += "\n";
  }
  return s;
}

SurfaceGrid surface_from_csv(std::string_view text) {
  SurfaceGrid g;
  std::size_t line_no = 0;
  auto meta = [&](std::string_view key) -> std::string_view {
    ++line_no;
    std::string_view line = next_line(text);
    const std::string prefix = "# " + std::string(key) + "=";
    if (line.substr(0, prefix.size()) != prefix) throw ParseError(line_no, "expected '" + prefix + "'");
    return line.substr(prefix.size());
  };
  auto number = [&](std::string_view v, auto& out) {
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ParseError(line_no, "bad number '" + std::string(v) + "'");
  };
  number(meta("extent"), g.extent);
  number(meta("resolution"), g.resolution);
  number(meta("seed"), g.seed);
  if (g.resolution < 1 || g.resolution % 2 == 0 || g.resolution > 100001) throw ParseError(2, "bad resolution");
  std::string_view shape = meta("shape");
  std::size_t dims[3];
  for (int k = 0; k < 3; ++k) {
    const auto x = shape.find('x');
    number(shape.substr(0, x), dims[k]);
    if (dims[k] == 0 || dims[k] > 4096) throw ParseError(line_no, "bad direction shape");
    shape = x == std::string_view::npos ? std::string_view{} : shape.substr(x + 1);
  }
  auto direction = [&](std::string_view key) {
    Tensor<float> d({1, dims[0], dims[1], dims[2]});
    std::string_view v = meta(key);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto sp = v.find(' ');
      int s = 0;
      number(v.substr(0, sp), s);
      if (s < -1 || s > 1) throw ParseError(line_no, "direction entries must be -1, 0 or 1");
      d[i] = float(s);
      if (sp == std::string_view::npos) {
        if (i + 1 != d.size()) throw ParseError(line_no, "direction too short");
        v = {};
      } else {
        v = v.substr(sp + 1);
      }
    }
    if (!v.empty()) throw ParseError(line_no, "direction too long");
    return d;
  };
  g.d1 = direction("d1");
  g.d2 = direction("d2");
  const int half = (g.resolution - 1) / 2;
  for (int i = 0; i < g.resolution; ++i) {
    g.axis.push_back(half == 0 ? 0.0 : g.extent * double(i - half) / double(half));
  }
  for (int i = 0; i < g.resolution; ++i) {
    ++line_no;
    if (text.empty()) throw ParseError(line_no, "missing grid row");
    std::string_view row = next_line(text);
    for (int j = 0; j < g.resolution; ++j) {
      const auto comma = row.find(',');
      double v = 0;
      number(row.substr(0, comma), v);
      g.values.push_back(v);
      if ((comma == std::string_view::npos) != (j + 1 == g.resolution)) throw ParseError(line_no, "wrong row length");
      row = comma == std::string_view::npos ? std::string_view{} : row.substr(comma + 1);
    }
  }
  return g;
}

ExportResult export_large_eps(Wrn<float>& model, const Dataset& data, const ExportConfig& cfg) {
  check_input(model, data);
  if (cfg.n == 0 || cfg.n > data.size()) {
    throw ConfigError("export count must be in [1, " + std::to_string(data.size()) + "]");
  }
  if (cfg.iters < 1) throw ConfigError("export iterations must be >= 1");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.directory, ec);
  if (ec) throw IoError(cfg.directory, "cannot create directory: " + ec.message());

  AttackConfig attack = AttackConfig::defaults(AttackFamily::Pgd, cfg.eps);
  attack.iters = cfg.iters;
  attack.step = 2.5 * cfg.eps / cfg.iters;
  attack.seed = cfg.seed;

  const Dataset subset = data.slice(0, cfg.n);
  WrnClassifier clf(model, NormMode::Evaluation);
  const Tensor<float> delta = perturb(clf, subset.images, subset.labels, attack);
  const Tensor<float> adv = apply_perturbation(subset.images, delta);

  ExportResult r;
  r.labels = subset.labels;
  r.clean_prediction = predict(model.logits(subset.images, NormMode::Evaluation));
  r.adversarial_prediction = predict(model.logits(adv, NormMode::Evaluation));
  const std::string ext = subset.channels() == 1 ? ".pgm" : ".ppm";
  std::string table = "index,label,clean_pred,adv_pred\n";
  for (std::size_t i = 0; i < cfg.n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%04zu", i);
    write_file((fs::path(cfg.directory) / (std::string("orig_") + name + ext)).string(), encode_netpbm(subset.images, i));
    write_file((fs::path(cfg.directory) / (std::string("adv_") + name + ext)).string(), encode_netpbm(adv, i));
    r.changed += r.clean_prediction[i] != r.adversarial_prediction[i];
    table += std::to_string(i) + "," + std::to_string(r.labels[i]) + "," + std::to_string(r.clean_prediction[i]) +
             "," + std::to_string(r.adversarial_prediction[i]) + "\n";
  }
  const std::string path = (fs::path(cfg.directory) / "predictions.csv").string();
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(table.data()), table.size()));
  return r;
}

}  // namespace advnet
