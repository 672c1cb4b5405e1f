#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "advnet/model.hpp"
#include "support/gradcheck.hpp"
#include "support/model_gradcheck.hpp"

using namespace advnet;
using advnet::testing::random_tensor;

namespace {

bool within(double value, double target, double tol) {
  return std::abs(value - target) <= tol * target;
}

// Independent count from the architecture description: stem, blocks of
// (bn, conv, bn, conv, optional 1x1 shortcut), final bn and dense layer.
std::size_t count_by_hand(int depth, int widen, int classes, int channels) {
  const int n = (depth - 4) / 6;
  std::size_t total = std::size_t(16 * channels * 9);
  int prev = 16;
  for (int g = 0; g < 3; ++g) {
    const int w = 16 * widen << g;
    for (int b = 0; b < n; ++b) {
      const int in = b == 0 ? prev : w;
      total += 2 * in + std::size_t(w) * in * 9 + 2 * w + std::size_t(w) * w * 9;
      if (b == 0 && (in != w || g > 0)) total += std::size_t(w) * in;
    }
    prev = w;
  }
  return total + 2 * prev + std::size_t(prev) * classes + classes;
}

}  // namespace

TEST_CASE("parameter counts match the reference sizes") {
  CHECK(within(double(param_count({28, 4, 10, false})), 5.85e6, 0.005));
  CHECK(within(double(param_count({28, 4, 100, false})), 5.87e6, 0.005));
  CHECK(within(double(param_count({28, 5, 10, false})), 9.13e6, 0.005));
  CHECK(within(double(param_count({34, 10, 10, false})), 46.16e6, 0.005));
}

TEST_CASE("parameter counts equal an independent hand count") {
  for (int depth : {10, 16, 28, 34})
    for (int widen : {1, 2, 4})
      for (int classes : {2, 10, 100}) {
        CHECK(param_count({depth, widen, classes, false}) == count_by_hand(depth, widen, classes, 3));
      }
  CHECK(param_count({10, 1, 4, false, 1, 16}) == count_by_hand(10, 1, 4, 1));
}

TEST_CASE("a lone dense head counts weight plus bias") {
  // The head of any WRN-d-4 is a 256 -> 10 dense layer.
  std::size_t head = 0;
  for (const auto& p : parameter_layout({28, 4, 10, false})) {
    if (p.name.rfind("head.fc", 0) == 0) head += shape_size(p.shape);
  }
  CHECK(head == 2570);
}

TEST_CASE("adaptive overhead stays below a widening step") {
  for (int depth : {10, 28}) {
    for (int widen : {1, 4}) {
      const auto base = param_count({depth, widen, 10, false});
      const auto adaptive = param_count({depth, widen, 10, true});
      const auto wider = param_count({depth, widen + 1, 10, false});
      CHECK(adaptive > base);
      CHECK(adaptive - base < wider - base);
    }
  }
  const double base = double(param_count({28, 4, 10, false}));
  const double overhead = (double(param_count({28, 4, 10, true})) - base) / base;
  CHECK(overhead >= 0.01);
  CHECK(overhead <= 0.08);
}

TEST_CASE("invalid specs name the violated invariant") {
  CHECK_THROWS_WITH_AS(WrnSpec({27, 4}).validate(), doctest::Contains("depth"), ConfigError);
  CHECK_THROWS_WITH_AS(WrnSpec({4, 4}).validate(), doctest::Contains("depth"), ConfigError);
  CHECK_THROWS_WITH_AS(WrnSpec({28, 0}).validate(), doctest::Contains("widening"), ConfigError);
  CHECK_THROWS_AS(Wrn<float>(WrnSpec{22, 1, 1}), ConfigError);
}

TEST_CASE("architecture strings") {
  CHECK(WrnSpec::from_arch("wrn-28-4-adaptive", 10) == WrnSpec{28, 4, 10, true});
  CHECK(WrnSpec::from_arch("wrn-10-1", 4, 1, 16) == WrnSpec{10, 1, 4, false, 1, 16});
  CHECK(WrnSpec{34, 10, 10, false}.arch() == "wrn-34-10");
  for (const char* bad : {"wrn-28", "resnet-18", "wrn-28-4-big", "wrn--4", "wrn-29-4", ""}) {
    CHECK_THROWS_AS(WrnSpec::from_arch(bad, 10), ConfigError);
  }
}

TEST_CASE("registration order is deterministic and backbone init is shared") {
  Wrn<float> a({10, 1, 4, false, 1, 16}, 3), b({10, 1, 4, false, 1, 16}, 3);
  Wrn<float> adaptive({10, 1, 4, true, 1, 16}, 3);
  REQUIRE(a.parameters().size() == b.parameters().size());
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    const auto& ea = a.parameters().entries()[i];
    const auto& eb = b.parameters().entries()[i];
    CHECK(ea.name == eb.name);
    CHECK(bitwise_equal(ea.value, eb.value));
    CHECK(bitwise_equal(ea.value, adaptive.parameters().at(ea.name)));
  }
  CHECK(adaptive.meta_parameter_names().size() == 18);
  CHECK(a.meta_parameter_names().empty());
}

TEST_CASE("identity reduction: adaptive logits equal the non-adaptive twin bitwise") {
  for (int depth : {10, 16}) {
    Wrn<float> plain({depth, 1, 3, false, 3, 12}, 9);
    Wrn<float> adaptive({depth, 1, 3, true, 3, 12}, 9);
    Rng rng(4);
    for (auto* m : {&plain, &adaptive}) m->mark_statistics_ready(true);
    for (int trial = 0; trial < 5; ++trial) {
      auto x = random_tensor<float>({4, 3, 12, 12}, rng);
      CHECK(bitwise_equal(plain.logits(x, NormMode::Evaluation), adaptive.logits(x, NormMode::Evaluation)));
      CHECK(bitwise_equal(plain.logits(x, NormMode::BatchStatistics),
                          adaptive.logits(x, NormMode::BatchStatistics)));
    }
  }
}

TEST_CASE("conditional normalization examples") {
  Rng rng(12);
  const std::size_t C = 4, M = 16;
  auto x = random_tensor<float>({2, C, 5, 5}, rng);
  auto wa = random_tensor<float>({M, C, 3, 3}, rng);
  auto wb = random_tensor<float>({M, M, 3, 3}, rng);
  Tensor<float> ba({M}), bb({M});
  auto run = [&](const Tensor<float>& wo, const Tensor<float>& bo) {
    Tape<float> t;
    CondNormVars v{t.constant(wa), t.constant(ba), t.constant(wb),
                   t.constant(bb), t.constant(wo), t.constant(bo)};
    return t.value(cond_norm_forward(t, t.constant(x), v));
  };
  SUBCASE("identity initialization returns x exactly") {
    CHECK(bitwise_equal(run(Tensor<float>({2 * C, M, 1, 1}), Tensor<float>({2 * C})), x));
  }
  SUBCASE("a meta-net frozen at nu = 2, mu = 1 gives 2x + 1") {
    Tensor<float> y = run(Tensor<float>({2 * C, M, 1, 1}), Tensor<float>({2 * C}, 1.0f));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == 2.0f * x[i] + 1.0f);
  }
  SUBCASE("channel mismatch is a configuration error") {
    Tape<float> t;
    CondNormVars v{t.constant(random_tensor<float>({M, C + 1, 3, 3}, rng)), t.constant(ba),
                   t.constant(wb), t.constant(bb), t.constant(Tensor<float>({2 * C, M, 1, 1})),
                   t.constant(Tensor<float>({2 * C}))};
    CHECK_THROWS_AS(cond_norm_forward(t, t.constant(x), v), ConfigError);
  }
}

TEST_CASE("conditional normalization gradients match finite differences in 64-bit") {
  Rng rng(13);
  const std::size_t C = 3, M = 5;
  const auto x = random_tensor<double>({2, C, 4, 4}, rng);
  std::vector<Tensor<double>> p = {random_tensor<double>({M, C, 3, 3}, rng, 0.5),
                                   random_tensor<double>({M}, rng, 0.5),
                                   random_tensor<double>({M, M, 3, 3}, rng, 0.5),
                                   random_tensor<double>({M}, rng, 0.5),
                                   random_tensor<double>({2 * C, M, 1, 1}, rng, 0.5),
                                   random_tensor<double>({2 * C}, rng, 0.5)};
  const auto weights = random_tensor<double>({2, C, 4, 4}, rng);
  const char* names[] = {"a.w", "a.b", "b.w", "b.b", "o.w", "o.b"};
  auto loss = [&](Tape<double>& t, Var xv, const std::vector<Var>& v) {
    Var y = cond_norm_forward(t, xv, CondNormVars{v[0], v[1], v[2], v[3], v[4], v[5]});
    return ops::sum(t, ops::mul(t, y, t.constant(weights)));
  };
  auto value = [&](const Tensor<double>& xin, const std::vector<Tensor<double>>& params) {
    Tape<double> t;
    std::vector<Var> v;
    for (const auto& q : params) v.push_back(t.constant(q));
    return t.value(loss(t, t.constant(xin), v))[0];
  };
  Tape<double> tape;
  std::vector<Var> vars;
  for (std::size_t i = 0; i < p.size(); ++i) vars.push_back(tape.leaf(names[i], p[i]));
  auto g = tape.backward(loss(tape, tape.leaf("x", x), vars));

  using advnet::testing::all_indices;
  using advnet::testing::central_difference;
  using advnet::testing::relative_error;
  auto fdx = central_difference<double>([&](const Tensor<double>& v) { return value(v, p); }, x, 1e-5,
                                        all_indices(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(relative_error(g["x"][i], fdx[i], 1e-6) <= 1e-4);
  for (std::size_t k = 0; k < p.size(); ++k) {
    auto fd = central_difference<double>(
        [&](const Tensor<double>& v) {
          auto q = p;
          q[k] = v;
          return value(x, q);
        },
        p[k], 1e-5, all_indices(p[k].size()));
    for (std::size_t i = 0; i < p[k].size(); ++i)
      CHECK_MESSAGE(relative_error(g[names[k]][i], fd[i], 1e-6) <= 1e-4, names[k], "[", i, "]");
  }
}

TEST_CASE("full adaptive WRN-10-1 gradient check in 64-bit") {
  auto r = advnet::testing::wrn_gradcheck(6);
  INFO("worst tensor: " << r.worst_name);
  CHECK(r.tensors > 40);
  CHECK(r.worst <= 1e-4);
}

TEST_CASE("evaluation mode has no cross-sample leakage") {
  Wrn<float> model({10, 1, 5, true, 3, 8}, 21);
  Rng rng(22);
  for (auto& [name, value] : model.parameters()) {
    if (name.find("cond.conv_out") != std::string::npos)
      for (auto& v : value.data()) v = float(rng.normal(0, 0.1));
  }
  for (auto [name, t] : model.running_tensors()) {
    for (auto& v : t->data()) v = name.find("var") != std::string::npos ? float(rng.uniform(0.5, 2)) : float(rng.normal());
  }
  model.mark_statistics_ready(true);
  auto x = random_tensor<float>({6, 3, 8, 8}, rng);
  Tensor<float> full = model.logits(x);
  std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
  Tensor<float> xp(x.shape());
  const std::size_t per = x.size() / 6;
  for (std::size_t i = 0; i < 6; ++i)
    std::copy_n(x.ptr() + perm[i] * per, per, xp.ptr() + i * per);
  Tensor<float> permuted = model.logits(xp);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t m = 0; m < 5; ++m) CHECK(permuted[i * 5 + m] == full[perm[i] * 5 + m]);
  // A single sample evaluated alone matches its row in the batch.
  Tensor<float> one = model.logits(x.slice_rows(2, 3));
  for (std::size_t m = 0; m < 5; ++m) CHECK(one[m] == full[2 * 5 + m]);
}

TEST_CASE("logit shape for several input sizes") {
  for (int size : {8, 9, 16, 32}) {
    Wrn<float> model({10, 1, 7, true, 1, size}, 1);
    Tensor<float> x({2, 1, std::size_t(size), std::size_t(size)}, 0.5f);
    CHECK(model.logits(x, NormMode::BatchStatistics).shape() == Shape{2, 7});
  }
}

TEST_CASE("evaluation before statistics exist is a state error") {
  Wrn<float> model({10, 1, 2, false, 1, 8}, 1);
  CHECK_THROWS_AS(model.logits(Tensor<float>({1, 1, 8, 8})), StateError);
}

TEST_CASE("64-bit shadow copy reproduces 32-bit logits closely") {
  Wrn<float> model({10, 1, 3, true, 1, 8}, 5);
  model.mark_statistics_ready(true);
  Wrn<double> shadow(model);
  Rng rng(6);
  auto x = random_tensor<float>({2, 1, 8, 8}, rng);
  Tensor<float> a = model.logits(x);
  Tensor<double> b = shadow.logits(x.cast<double>());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-4));
}
