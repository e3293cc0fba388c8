#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "dejavu/ad/checkpoint.h"
#include "dejavu/ad/init.h"
#include "dejavu/ad/ops.h"
#include "dejavu/ad/optimizer.h"
#include "dejavu/error.h"
#include "dejavu/model.h"

#include "../support/gradcheck.h"

using namespace dejavu;
using namespace dejavu::ad;
using dejavu::testing::check_gradient;
using dejavu::testing::random_tensor;
using dejavu::testing::weighted_sum;

namespace {

constexpr double kOpTolerance = 1e-5;

std::mt19937_64& rng() {
  static std::mt19937_64 r(2024);
  return r;
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(t.at(1, 2) == 6);
  CHECK(t.reshaped({3, 2}).at(2, 1) == 6);
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK(Tensor::scalar(2.5).item() == 2.5);
  t[0] = std::nan("");
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("elementwise op gradients") {
  auto& r = rng();
  const Tensor a = random_tensor({3, 4}, r), b = random_tensor({3, 4}, r);
  CHECK(check_gradient({a, b}, [](Tape& t, const auto& v) { return weighted_sum(t, add(v[0], v[1])); }) <
        kOpTolerance);
  CHECK(check_gradient({a, b}, [](Tape& t, const auto& v) { return weighted_sum(t, sub(v[0], v[1])); }) <
        kOpTolerance);
  CHECK(check_gradient({a, b}, [](Tape& t, const auto& v) { return weighted_sum(t, mul(v[0], v[1])); }) <
        kOpTolerance);
  CHECK(check_gradient({a}, [](Tape& t, const auto& v) { return weighted_sum(t, scale(v[0], -1.7)); }) <
        kOpTolerance);
  CHECK(check_gradient({a}, [](Tape&, const auto& v) { return mean(v[0]); }) < kOpTolerance);
  CHECK(check_gradient({a, b}, [](Tape&, const auto& v) { return squared_error(v[0], v[1]); }) < kOpTolerance);
}

TEST_CASE("activation gradients") {
  auto& r = rng();
  const Tensor x = random_tensor({5, 3}, r, -3.0, 3.0);
  CHECK(check_gradient({x}, [](Tape& t, const auto& v) { return weighted_sum(t, gelu(v[0])); }) < kOpTolerance);
  CHECK(check_gradient({x}, [](Tape& t, const auto& v) { return weighted_sum(t, sigmoid(v[0])); }) <
        kOpTolerance);
  CHECK(check_gradient({x}, [](Tape& t, const auto& v) { return weighted_sum(t, tanh(v[0])); }) < kOpTolerance);
  CHECK(check_gradient({x}, [](Tape& t, const auto& v) { return weighted_sum(t, leaky_rectifier(v[0], 0.2)); }) <
        kOpTolerance);
  CHECK(check_gradient({x}, [](Tape& t, const auto& v) { return weighted_sum(t, softmax(v[0])); }) <
        kOpTolerance);
  const Tensor pos = random_tensor({4}, r, 0.2, 3.0);
  CHECK(check_gradient({pos}, [](Tape& t, const auto& v) { return weighted_sum(t, log(v[0])); }) < kOpTolerance);
}

TEST_CASE("linear algebra gradients") {
  auto& r = rng();
  const Tensor a = random_tensor({3, 4}, r), b = random_tensor({4, 2}, r), bias = random_tensor({2}, r);
  CHECK(check_gradient({a, b}, [](Tape& t, const auto& v) { return weighted_sum(t, matmul(v[0], v[1])); }) <
        kOpTolerance);
  CHECK(check_gradient({a, b, bias},
                       [](Tape& t, const auto& v) { return weighted_sum(t, dense(v[0], v[1], v[2])); }) <
        kOpTolerance);
  const Tensor x1 = random_tensor({4}, r);
  CHECK(check_gradient({x1, b, bias},
                       [](Tape& t, const auto& v) { return weighted_sum(t, dense(v[0], v[1], v[2])); }) <
        kOpTolerance);
}

TEST_CASE("convolution gradients") {
  auto& r = rng();
  const Tensor x = random_tensor({7, 2}, r), k = random_tensor({3, 2, 4}, r), b = random_tensor({4}, r);
  CHECK(check_gradient({x, k, b}, [](Tape& t, const auto& v) { return weighted_sum(t, conv1d(v[0], v[1], v[2])); }) <
        kOpTolerance);
  const Tensor y = random_tensor({5, 4}, r), kt = random_tensor({3, 2, 4}, r), bt = random_tensor({2}, r);
  CHECK(check_gradient({y, kt, bt},
                       [](Tape& t, const auto& v) { return weighted_sum(t, conv1d_transpose(v[0], v[1], v[2])); }) <
        kOpTolerance);
}

TEST_CASE("conv1d_transpose is the adjoint of conv1d") {
  auto& r = rng();
  // <conv(x), y> == <x, convT(y)> with zero biases and the same kernels.
  const Tensor x = random_tensor({8, 2}, r), y = random_tensor({6, 3}, r), k = random_tensor({3, 2, 3}, r);
  Tape tape(false);
  const Tensor cx = conv1d(tape.constant(x), tape.constant(k), tape.constant(Tensor({3}))).value();
  const Tensor ty = conv1d_transpose(tape.constant(y), tape.constant(k), tape.constant(Tensor({2}))).value();
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < cx.size(); ++i) lhs += cx[i] * y[i];
  for (std::size_t i = 0; i < ty.size(); ++i) rhs += x[i] * ty[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("gru gradients") {
  auto& r = rng();
  const Tensor x = random_tensor({5, 2}, r), wi = random_tensor({2, 9}, r), wh = random_tensor({3, 9}, r),
               b = random_tensor({9}, r);
  CHECK(check_gradient({x, wi, wh, b},
                       [](Tape& t, const auto& v) {
                         return weighted_sum(t, gru_sequence(v[0], {v[1], v[2], v[3]}));
                       }) < kOpTolerance);
}

TEST_CASE("gru matches a scalar hand computation") {
  // D = H = 1, one step from h = 0: h' = (1 - z)·n.
  Tape tape(false);
  const double x = 0.7, wr = 0.3, wz = -0.4, wn = 1.1, br = 0.1, bz = 0.2, bn = -0.3;
  Var out = gru_sequence(tape.constant(Tensor::matrix(1, 1, {x})),
                         {tape.constant(Tensor::matrix(1, 3, {wr, wz, wn})),
                          tape.constant(Tensor::matrix(1, 3, {0.5, 0.5, 0.5})),
                          tape.constant(Tensor::vector({br, bz, bn}))});
  const double z = 1.0 / (1.0 + std::exp(-(x * wz + bz)));
  const double n = std::tanh(x * wn + bn);
  CHECK(out.value()[0] == doctest::Approx((1 - z) * n).epsilon(1e-14));
}

TEST_CASE("shape op gradients") {
  auto& r = rng();
  const Tensor a = random_tensor({3, 2}, r), b = random_tensor({3, 4}, r);
  CHECK(check_gradient({a, b},
                       [](Tape& t, const auto& v) {
                         std::vector<Var> parts{v[0], v[1]};
                         return weighted_sum(t, concat_columns(parts));
                       }) < kOpTolerance);
  const Tensor r1 = random_tensor({4}, r), r2 = random_tensor({4}, r);
  CHECK(check_gradient({r1, r2},
                       [](Tape& t, const auto& v) {
                         std::vector<Var> rows{v[0], v[1]};
                         return weighted_sum(t, stack_rows(rows));
                       }) < kOpTolerance);
  CHECK(check_gradient({b}, [](Tape& t, const auto& v) { return weighted_sum(t, reshape(v[0], {2, 6})); }) <
        kOpTolerance);
}

TEST_CASE("graph attention gradients") {
  auto& r = rng();
  auto nb = std::make_shared<const model::Neighborhoods>(
      model::Neighborhoods{{0, 1, 2}, {1, 0}, {2, 0, 3}, {3, 2}, {4}});
  const Tensor t = random_tensor({5, 3}, r), a = random_tensor({6}, r);
  CHECK(check_gradient({t, a},
                       [nb](Tape& tp, const auto& v) {
                         return weighted_sum(tp, model::graph_attention(v[0], v[1], nb, 0.2));
                       }) < kOpTolerance);
}

TEST_CASE("gradients accumulate across uses of a leaf") {
  Tensor g({1});
  Tape tape;
  Var x = tape.leaf(Tensor::vector({3.0}), &g);
  tape.backward(sum(mul(x, x)));
  CHECK(g[0] == doctest::Approx(6.0));
}

TEST_CASE("gelu at 3 against an independent normal CDF") {
  // Φ(3) from the complementary error function via its continued fraction.
  auto phi = [](double x) {
    const double z = x / std::sqrt(2.0);
    double f = 0.0;
    for (int k = 60; k >= 1; --k) f = (k / 2.0) / (z + f);
    const double erfc = std::exp(-z * z) / std::sqrt(M_PI) / (z + f);
    return 1.0 - 0.5 * erfc;
  };
  CHECK(gelu_value(3.0) == doctest::Approx(3.0 * phi(3.0)).epsilon(1e-12));
  CHECK(gelu_value(3.0) == doctest::Approx(2.9960).epsilon(1e-4));
  CHECK(gelu_value(0.0) == 0.0);
}

TEST_CASE("adam step against a hand oracle") {
  ParamStore store;
  store.add("w", Tensor::vector({1.0, -2.0}));
  AdamOptions opt;
  opt.learning_rate = 0.1;
  opt.weight_decay = 0.01;
  opt.clip_norm = 0.0;
  Adam adam(opt);
  const double g0 = 0.5, g1 = -0.25;
  store.grad("w")[0] = g0;
  store.grad("w")[1] = g1;
  adam.step(store);
  // First step: m_hat = g, v_hat = g², so the update is lr·(sign(g)·|g|/(|g|+ε) + wd·w).
  auto expect = [&](double w, double g) { return w - 0.1 * (g / (std::abs(g) + 1e-8) + 0.01 * w); };
  CHECK(store.value("w")[0] == doctest::Approx(expect(1.0, g0)).epsilon(1e-14));
  CHECK(store.value("w")[1] == doctest::Approx(expect(-2.0, g1)).epsilon(1e-14));
}

TEST_CASE("adam clips the global norm") {
  ParamStore a, b;
  a.add("w", Tensor::vector({0.0, 0.0}));
  b.add("w", Tensor::vector({0.0, 0.0}));
  AdamOptions opt;
  opt.weight_decay = 0.0;
  opt.clip_norm = 1.0;
  Adam clipped(opt);
  a.grad("w")[0] = 30.0;
  a.grad("w")[1] = 40.0;
  CHECK(clipped.step(a) == doctest::Approx(50.0));
  CHECK(clipped.state().first_moment.at("w")[0] == doctest::Approx(0.1 * 0.6));
  CHECK(clipped.state().first_moment.at("w")[1] == doctest::Approx(0.1 * 0.8));
}

TEST_CASE("adam rejects non-finite gradients") {
  ParamStore s;
  s.add("w", Tensor::vector({1.0}));
  s.grad("w")[0] = std::nan("");
  Adam adam;
  CHECK_THROWS_AS(adam.step(s), DivergenceError);
}

TEST_CASE("orthogonal init is orthogonal") {
  Rng r(7);
  const Tensor q = orthogonal(5, r);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      double dot = 0;
      for (std::size_t k = 0; k < 5; ++k) dot += q.at(i, k) * q.at(j, k);
      CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("checkpoint round-trips bit for bit") {
  ParamStore s;
  Rng r(3);
  s.add("a/b", glorot_uniform({3, 4}, 3, 4, r));
  s.add("c", Tensor::vector({0.1, 1.0 / 3.0, -2e-300, 123456789.123456789}));
  const auto path = std::filesystem::temp_directory_path() / "dejavu_ckpt_test.json";
  save_params(s, path);
  const ParamStore back = load_params(path);
  CHECK(back == s);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(params_from_json(nlohmann::json{{"format", "other"}}), ValidationError);
}
