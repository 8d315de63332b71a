#include "simsr/ad/adam.hpp"
#include "simsr/ad/checkpoint.hpp"
#include "simsr/ad/grad_check.hpp"
#include "simsr/ad/ops.hpp"
#include "simsr/error.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace simsr;
using namespace simsr::ad;

using testing::random_tensor;

TEST_CASE("softmax hand-checked values") {
  Tape tape;
  auto x = tape.constant(Tensor(Shape{3}, {2.5, 2.5, 2.5}));
  auto s = softmax(x, 0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(s.value()[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  auto y = softmax(tape.constant(Tensor(Shape{2}, {0.0, std::log(2.0)})), 0);
  CHECK(y.value()[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(y.value()[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));

  auto big = softmax(tape.constant(Tensor(Shape{2}, {1000.0, 1000.0})), 0);
  CHECK(big.value()[0] == 0.5);

  CHECK_THROWS_AS(softmax(tape.constant(Tensor(Shape{2, 0})), 1), Error);
}

TEST_CASE("softmax rows are positive and sum to one") {
  std::mt19937_64 rng(4);
  Tape tape;
  auto s = softmax(tape.constant(random_tensor({7, 5}, rng, -30.0, 30.0)), 1);
  for (std::size_t r = 0; r < 7; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 5; ++c) {
      CHECK(s.value().at(r, c) >= 0.0);
      total += s.value().at(r, c);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("cosine similarity of opposite vectors is -1") {
  Tape tape;
  auto a = tape.constant(Tensor::matrix(1, 3, {1.0, -2.0, 0.5}));
  auto b = tape.constant(Tensor::matrix(1, 3, {-1.0, 2.0, -0.5}));
  CHECK(cosine_similarity(a, b, 1).value()[0] == doctest::Approx(-1.0).epsilon(1e-15));
  auto z = tape.constant(Tensor::matrix(1, 3, {0.0, 0.0, 0.0}));
  CHECK_THROWS_AS(cosine_similarity(a, z, 1), Error);
}

TEST_CASE("backward of sum yields ones") {
  Tape tape;
  auto x = tape.variable(Tensor(Shape{2, 3}, 0.7));
  tape.backward(sum(x));
  const auto g = tape.grad(x);
  for (double v : g.values()) CHECK(v == 1.0);
}

TEST_CASE("sin derivative against the closed form") {
  Tape tape;
  auto x = tape.variable(Tensor::scalar(0.3));
  tape.backward(sum(sin(x)));
  CHECK(std::abs(tape.grad(x).item() - std::cos(0.3)) / std::cos(0.3) < 1e-12);
  const double h = 1e-6;
  const double fd = (std::sin(0.3 + h) - std::sin(0.3 - h)) / (2 * h);
  CHECK(std::abs(tape.grad(x).item() - fd) / std::abs(fd) < 1e-7);
}

TEST_CASE("half squared norm has gradient x") {
  std::mt19937_64 rng(10);
  auto point = random_tensor({6}, rng);
  ScalarFn f = [](Tape&, const Var& x) { return scale(sum(square(x)), 0.5); };
  auto rep = grad_check_report(f, point, 1e-6);
  CHECK(rep.max_rel_error < 1e-9);
  for (std::size_t i = 0; i < point.size(); ++i) CHECK(rep.analytic[i] == doctest::Approx(point[i]).epsilon(1e-14));
}

TEST_CASE("a recording supports a single backward pass") {
  Tape tape;
  auto x = tape.variable(Tensor::scalar(2.0));
  auto y = square(x);
  tape.backward(y);
  try {
    tape.backward(y);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::graph_consumed);
  }
  tape.reset();
  CHECK(tape.size() == 0);
}

TEST_CASE("backward requires a scalar loss") {
  Tape tape;
  auto x = tape.variable(Tensor(Shape{3}, 1.0));
  try {
    tape.backward(square(x));
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::not_scalar);
  }
}

TEST_CASE("gradients accumulate into parameters") {
  ParamSet params;
  auto& w = params.add("w", Tensor(Shape{2}, {1.0, -3.0}));
  Tape tape;
  auto p = tape.parameter(w);
  tape.backward(sum(add(p, p)));
  CHECK(w.grad[0] == 2.0);
  CHECK(w.grad[1] == 2.0);
  params.zero_grad();
  CHECK(w.grad[0] == 0.0);
}

TEST_CASE("every primitive agrees with finite differences") {
  std::uint64_t seed = 1000;
  for (const auto& c : testing::primitive_cases()) {
    INFO(c.name);
    CHECK(testing::primitive_fd_error(c, 20, seed++) < 1e-5);
  }
}

TEST_CASE("reduce_max routes the gradient to the first maximum") {
  Tape tape;
  auto x = tape.variable(Tensor::matrix(2, 3, {1.0, 4.0, 4.0, -2.0, -5.0, -2.0}));
  tape.backward(sum(reduce_max(x, 1)));
  auto g = tape.grad(x);
  CHECK(std::vector<double>(g.values().begin(), g.values().end()) == std::vector<double>{0, 1, 0, 1, 0, 0});
}

TEST_CASE("matmul with the identity and adjoint linearity") {
  std::mt19937_64 rng(3);
  auto a = random_tensor({4, 3}, rng);
  Tensor eye(Shape{3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  Tape tape;
  auto prod = matmul(tape.constant(a), tape.constant(eye));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(prod.value()[i] == a[i]);

  // Gradient of sum(W * f(x)) is linear in the weighting W.
  auto x0 = random_tensor({3, 2}, rng);
  auto w1 = random_tensor({4, 2}, rng), w2 = random_tensor({4, 2}, rng);
  auto grad_for = [&](const Tensor& w) {
    Tape t;
    auto x = t.variable(x0);
    t.backward(sum(mul(matmul(t.constant(a), x), t.constant(w))));
    return t.grad(x);
  };
  Tensor w12(Shape{4, 2});
  for (std::size_t i = 0; i < w12.size(); ++i) w12[i] = 2.0 * w1[i] - 0.5 * w2[i];
  auto g1 = grad_for(w1), g2 = grad_for(w2), g12 = grad_for(w12);
  for (std::size_t i = 0; i < g12.size(); ++i) CHECK(g12[i] == doctest::Approx(2.0 * g1[i] - 0.5 * g2[i]).epsilon(1e-12));
}

TEST_CASE("shape mismatches are rejected") {
  Tape tape;
  auto a = tape.constant(Tensor(Shape{2, 3}));
  auto b = tape.constant(Tensor(Shape{3, 2}));
  CHECK_THROWS_AS(add(a, b), Error);
  CHECK_THROWS_AS(matmul(a, a), Error);
  CHECK_THROWS_AS(reshape(a, {4}), Error);
}

TEST_CASE("adam leaves parameters unchanged for a zero gradient") {
  ParamSet params;
  auto& p = params.add("p", Tensor(Shape{3}, {0.5, -1.0, 2.0}));
  params.zero_grad();
  AdamState state;
  adam_step(params, state);
  CHECK(p.value[0] == 0.5);
  CHECK(p.value[1] == -1.0);
  CHECK(p.value[2] == 2.0);
}

TEST_CASE("adam first step moves each coordinate by about lr against the gradient sign") {
  ParamSet params;
  auto& p = params.add("p", Tensor(Shape{3}, {0.0, 1.0, -1.0}));
  params.add("frozen", Tensor(Shape{1}, 5.0), false);
  params.zero_grad();
  p.grad[0] = 3.0;
  p.grad[1] = -0.01;
  p.grad[2] = 1e3;
  AdamState state;
  state.config.lr = 1e-3;
  adam_step(params, state);
  CHECK(p.value[0] == doctest::Approx(-1e-3).epsilon(1e-6));
  CHECK(p.value[1] == doctest::Approx(1.0 + 1e-3).epsilon(1e-6));
  CHECK(p.value[2] == doctest::Approx(-1.0 - 1e-3).epsilon(1e-6));
  CHECK(params.get("frozen").value[0] == 5.0);

  const double after_one = p.value[0];
  adam_step(params, state);
  CHECK(p.value[0] < after_one);
}

TEST_CASE("adam minimizes a quadratic") {
  ParamSet params;
  auto& p = params.add("p", Tensor(Shape{2}, {3.0, -2.0}));
  AdamState state;
  state.config.lr = 0.05;
  for (int it = 0; it < 2000; ++it) {
    params.zero_grad();
    Tape tape;
    tape.backward(sum(square(add_scalar(tape.parameter(p), -1.0))));
    adam_step(params, state);
  }
  CHECK(p.value[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(p.value[1] == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("checkpoint round trip is exact after f32 rounding") {
  std::mt19937_64 rng(12);
  ParamSet params;
  params.add("layer0.weight", random_tensor({5, 4}, rng));
  params.add("layer0.bias", random_tensor({4}, rng));
  params.add("scale", Tensor::scalar(3.25), false);
  round_to_f32(params);
  auto path = testing::scratch_dir("ckpt") / "model.ssck";
  write_checkpoint(params, path);

  ParamSet other;
  other.add("layer0.weight", Tensor(Shape{5, 4}));
  other.add("layer0.bias", Tensor(Shape{4}));
  other.add("scale", Tensor::scalar(0.0), false);
  load_checkpoint(other, path);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& a = params.all()[i].value;
    const auto& b = other.all()[i].value;
    REQUIRE(a.shape() == b.shape());
    for (std::size_t e = 0; e < a.size(); ++e) CHECK(a[e] == b[e]);
  }

  ParamSet wrong;
  wrong.add("layer0.weight", Tensor(Shape{4, 5}));
  CHECK_THROWS_AS(load_checkpoint(wrong, path), Error);
  CHECK_THROWS_AS(read_checkpoint(path.parent_path() / "missing.ssck"), Error);
}
