#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "lcm/core/grad_check.hpp"
#include "lcm/core/ops.hpp"

using namespace lcm;

namespace {

Tensor<double> random_tensor(const Shape& shape, Prng& prng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(shape);
  for (auto& v : t.values()) v = prng.uniform(lo, hi);
  return t;
}

// Values separated by at least `gap`, so max comparisons stay stable under a
// finite-difference step.
Tensor<double> distinct_tensor(const Shape& shape, Prng& prng, double gap = 0.05) {
  Tensor<double> t(shape);
  auto perm = prng.permutation(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = -1.0 + gap * static_cast<double>(perm[i]);
  return t;
}

// Projects a tensor to a scalar with fixed random weights so every output
// element carries a distinct upstream gradient.
Var<double> project(const Var<double>& v, Prng& prng) {
  std::vector<double> w(v.value().size());
  for (auto& x : w) x = prng.uniform(-1.0, 1.0);
  return weighted_sum(v, w);
}

}  // namespace

TEST(Forward, SigmoidOfZeroIsHalf) {
  Tape<float> tape;
  auto y = sigmoid(tape.constant(Tensor<float>::vector({0.0f})));
  EXPECT_EQ(y.value()[0], 0.5f);
}

TEST(Forward, GeluFixesZero) {
  Tape<float> tape;
  auto y = gelu(tape.constant(Tensor<float>::vector({0.0f})));
  EXPECT_EQ(y.value()[0], 0.0f);
}

TEST(Forward, GeluMatchesTanhApproximation) {
  Tape<double> tape;
  auto y = gelu(tape.constant(Tensor<double>::vector({1.0, -2.0})));
  for (std::size_t i = 0; i < 2; ++i) {
    const double x = i == 0 ? 1.0 : -2.0;
    const double expected = 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
    EXPECT_NEAR(y.value()[i], expected, 1e-14);
  }
}

TEST(Forward, MatmulByIdentity) {
  Prng prng(7);
  Tape<float> tape;
  Tensor<float> a({3, 3});
  for (auto& v : a.values()) v = static_cast<float>(prng.uniform(-2, 2));
  auto y = matmul(tape.constant(Tensor<float>::identity(3)), tape.constant(a));
  EXPECT_TRUE(bit_identical(y.value(), a));
}

TEST(Forward, SigmoidAndBceStayFiniteOnExtremeInputs) {
  Tape<float> tape;
  auto p = sigmoid(tape.constant(Tensor<float>::vector({-200.0f, 200.0f, -90.0f})));
  for (float v : p.value().values()) EXPECT_TRUE(std::isfinite(v));
  auto loss = bce(p, tape.constant(Tensor<float>::vector({1.0f, 0.0f, 1.0f})));
  EXPECT_TRUE(std::isfinite(loss.value().item()));
  auto z = bce_with_logits(tape.constant(Tensor<float>::vector({-200.0f, 200.0f})),
                           tape.constant(Tensor<float>::vector({1.0f, 0.0f})));
  EXPECT_NEAR(z.value().item(), 200.0f, 1e-3f);
}

TEST(Forward, ShapeMismatchNamesOperationAndShapes) {
  Tape<float> tape;
  auto a = tape.constant(Tensor<float>({2, 3}));
  auto b = tape.constant(Tensor<float>({3, 2}));
  try {
    add(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("add"), std::string::npos);
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3,2]"), std::string::npos) << msg;
  }
  EXPECT_THROW(matmul(a, a), ShapeError);
}

TEST(Forward, EmptyTensorIsRejected) {
  EXPECT_THROW(Tensor<float>(Shape{0}), Error);
  EXPECT_THROW(Tensor<float>(Shape{}), Error);
}

TEST(Backward, SumOfSquares) {
  Tape<float> tape;
  auto x = tape.variable(Tensor<float>::vector({1, 2, 3}));
  auto grads = tape.backward(sum_all(mul(x, x)));
  const auto& g = grads.of(x);
  EXPECT_EQ(g[0], 2.0f);
  EXPECT_EQ(g[1], 4.0f);
  EXPECT_EQ(g[2], 6.0f);
}

TEST(Backward, MseWithZeroKernel) {
  // pred = x W with W = 0, loss = mean((pred - y)^2): dL/dW = -2 x^T y / len(y).
  const std::vector<double> x{0.5, -1.5, 2.0};
  const std::vector<double> y{1.0, -2.0};
  ParameterStore<double> store;
  store.add("W", Tensor<double>::zeros({3, 2}));
  Tape<double> tape;
  auto pred = matmul(tape.constant(Tensor<double>::matrix(1, 3, x)), tape.param(store, "W"));
  tape.backward(mse(pred, tape.constant(Tensor<double>::matrix(1, 2, y))));
  const auto& g = store.grad("W");
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(g[i * 2 + j], -2.0 * x[i] * y[j] / 2.0, 1e-15);
  }
  auto report = grad_check(store, [&](Tape<double>& t, ParameterStore<double>& s) {
    auto p = matmul(t.constant(Tensor<double>::matrix(1, 3, x)), t.param(s, "W"));
    return mse(p, t.constant(Tensor<double>::matrix(1, 2, y)));
  });
  EXPECT_LT(report.max_rel_error, 1e-6);
}

TEST(Backward, DisconnectedParameterGetsZeros) {
  ParameterStore<float> store;
  store.add("used", Tensor<float>::vector({1, 2}));
  store.add("unused", Tensor<float>::vector({5, 5, 5}));
  Tape<float> tape;
  tape.backward(sum_all(square(tape.param(store, "used"))));
  for (float g : store.grad("unused").values()) EXPECT_EQ(g, 0.0f);
  EXPECT_TRUE(store.entry(1).has_grad);
}

TEST(Backward, NonScalarLossIsRejected) {
  Tape<float> tape;
  auto x = tape.variable(Tensor<float>::vector({1, 2}));
  EXPECT_THROW(tape.backward(square(x)), GraphError);
}

TEST(Backward, SecondBackwardWithoutNewForwardFails) {
  Tape<float> tape;
  auto x = tape.variable(Tensor<float>::vector({1, 2}));
  auto loss = sum_all(x);
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), GraphError);
}

TEST(Backward, StaleHandleCannotFeedNewGraph) {
  Tape<float> tape;
  auto x = tape.variable(Tensor<float>::vector({1, 2}));
  tape.backward(sum_all(x));
  EXPECT_THROW(add(x, x), GraphError);
}

TEST(Backward, GraphInvariantGradientShapesMatchValues) {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>({2, 3}, 0.3));
  auto w = tape.variable(Tensor<double>({3, 4}, -0.1));
  auto grads = tape.backward(mean_all(tanh(matmul(x, w))));
  EXPECT_EQ(grads.of(x).shape(), (Shape{2, 3}));
  EXPECT_EQ(grads.of(w).shape(), (Shape{3, 4}));
}

TEST(GradCheck, DenseSigmoidMse) {
  Prng prng(11);
  ParameterStore<double> store;
  store.add("W", random_tensor({4, 3}, prng));
  store.add("b", random_tensor({3}, prng));
  const auto x = random_tensor({5, 4}, prng);
  const auto y = random_tensor({5, 3}, prng, 0.0, 1.0);
  auto report = grad_check(store, [&](Tape<double>& t, ParameterStore<double>& s) {
    return mse(sigmoid(dense(t.constant(x), t.param(s, "W"), t.param(s, "b"))), t.constant(y));
  });
  EXPECT_LT(report.max_rel_error, 1e-3);
  EXPECT_EQ(report.params.size(), 2u);
}

TEST(GradCheck, ZeroNetworkWithConstantLoss) {
  ParameterStore<double> store;
  store.add("W", Tensor<double>::zeros({3, 2}));
  auto report = grad_check(store, [&](Tape<double>& t, ParameterStore<double>& s) {
    return sum_all(scale(matmul(t.constant(Tensor<double>({1, 3}, 1.0)), t.param(s, "W")), 0.0));
  });
  for (double g : store.grad("W").values()) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(report.max_rel_error, 0.0);
}

// Every differentiable operator against central differences over 100 random
// shapes and inputs.
TEST(GradCheck, EveryOperatorOnRandomShapes) {
  using Builder = std::function<Var<double>(Tape<double>&, ParameterStore<double>&, Prng&, std::size_t, std::size_t)>;
  struct Case {
    const char* name;
    Builder build;
    bool distinct;  // inputs must avoid ties (max-like ops)
    double lo = -1.0, hi = 1.0;
  };
  auto P = [](Tape<double>& t, ParameterStore<double>& s, const char* n) { return t.param(s, n); };
  std::vector<Case> cases{
      {"add", [&](auto& t, auto& s, auto&, auto, auto) { return add(P(t, s, "a"), P(t, s, "b")); }, false},
      {"sub", [&](auto& t, auto& s, auto&, auto, auto) { return sub(P(t, s, "a"), P(t, s, "b")); }, false},
      {"mul", [&](auto& t, auto& s, auto&, auto, auto) { return mul(P(t, s, "a"), P(t, s, "b")); }, false},
      {"scale", [&](auto& t, auto& s, auto&, auto, auto) { return scale(P(t, s, "a"), -1.7); }, false},
      {"square", [&](auto& t, auto& s, auto&, auto, auto) { return square(P(t, s, "a")); }, false},
      {"sigmoid", [&](auto& t, auto& s, auto&, auto, auto) { return sigmoid(P(t, s, "a")); }, false},
      {"tanh", [&](auto& t, auto& s, auto&, auto, auto) { return tanh(P(t, s, "a")); }, false},
      {"gelu", [&](auto& t, auto& s, auto&, auto, auto) { return gelu(P(t, s, "a")); }, false},
      {"one_minus", [&](auto& t, auto& s, auto&, auto, auto) { return one_minus(P(t, s, "a")); }, false},
      {"safe_sqrt", [&](auto& t, auto& s, auto&, auto, auto) { return safe_sqrt(P(t, s, "a")); }, false, 0.2, 2.0},
      {"matmul", [&](auto& t, auto& s, auto&, auto, auto) { return matmul(P(t, s, "a"), P(t, s, "k")); }, false},
      {"dense", [&](auto& t, auto& s, auto&, auto, auto) { return dense(P(t, s, "a"), P(t, s, "k"), P(t, s, "bias")); }, false},
      {"concat", [&](auto& t, auto& s, auto&, auto, auto) { return concat<double>({P(t, s, "a"), P(t, s, "b")}); }, false},
      {"slice", [&](auto& t, auto& s, auto&, auto, std::size_t c) { return slice(P(t, s, "a"), c / 2, c); }, false},
      {"sum0", [&](auto& t, auto& s, auto&, auto, auto) { return sum(P(t, s, "a"), 0); }, false},
      {"sum1", [&](auto& t, auto& s, auto&, auto, auto) { return sum(P(t, s, "a"), 1); }, false},
      {"mean0", [&](auto& t, auto& s, auto&, auto, auto) { return mean(P(t, s, "a"), 0); }, false},
      {"gather", [&](auto& t, auto& s, auto& rng, std::size_t r, auto) {
         std::vector<std::size_t> rows{rng.index(r), rng.index(r), 0};
         return gather_rows<double>(P(t, s, "a"), rows);
       }, false},
      {"replace", [&](auto& t, auto& s, auto& rng, std::size_t r, auto) {
         std::vector<std::size_t> rows{rng.index(r)};
         return replace_rows<double>(P(t, s, "a"), rows, gather_rows<double>(P(t, s, "b"), std::vector<std::size_t>{0}));
       }, false},
      {"segment_sum", [&](auto& t, auto& s, auto&, std::size_t r, auto) {
         std::vector<std::size_t> off{0, r / 2, r};
         return segment_sum<double>(P(t, s, "a"), off);
       }, false},
      {"segment_max", [&](auto& t, auto& s, auto&, std::size_t r, auto) {
         std::vector<std::size_t> off{0, (r + 1) / 2, r};
         return segment_max<double>(P(t, s, "a"), off);
       }, true},
      {"scale_rows", [&](auto& t, auto& s, auto& rng, std::size_t r, auto) {
         std::vector<double> f(r);
         for (auto& v : f) v = rng.uniform(-2, 2);
         return scale_rows(P(t, s, "a"), f);
       }, false},
      {"bce", [&](auto& t, auto& s, auto&, auto, auto) { return bce(sigmoid(P(t, s, "a")), sigmoid(P(t, s, "b"))); }, false},
      {"bce_logits", [&](auto& t, auto& s, auto&, auto, auto) { return bce_with_logits(P(t, s, "a"), sigmoid(P(t, s, "b"))); }, false},
      {"mse", [&](auto& t, auto& s, auto&, auto, auto) { return mse(P(t, s, "a"), P(t, s, "b")); }, false},
      {"row_sqnorm", [&](auto& t, auto& s, auto&, auto, auto) { return row_sqnorm(P(t, s, "a")); }, false},
  };

  Prng prng(2024);
  std::size_t checked = 0;
  for (std::size_t trial = 0; trial < 104; ++trial) {
    const Case& c = cases[trial % cases.size()];
    const std::size_t rows = 1 + prng.index(4);
    const std::size_t cols = 1 + prng.index(5);
    const std::size_t inner = 1 + prng.index(4);
    ParameterStore<double> store;
    store.add("a", c.distinct ? distinct_tensor({rows, cols}, prng) : random_tensor({rows, cols}, prng, c.lo, c.hi));
    store.add("b", random_tensor({rows, cols}, prng));
    store.add("k", random_tensor({cols, inner}, prng));
    store.add("bias", random_tensor({inner}, prng));
    const std::uint64_t op_seed = prng.next_u64();
    auto report = grad_check(store, [&](Tape<double>& t, ParameterStore<double>& s) {
      Prng local(op_seed);
      auto out = c.build(t, s, local, rows, cols);
      return project(out, local);
    });
    EXPECT_LT(report.max_rel_error, 1e-3) << c.name << " rows=" << rows << " cols=" << cols;
    ++checked;
  }
  EXPECT_GE(checked, 100u);
}

TEST(Determinism, SameSeedSameLoss) {
  auto run = [] {
    Prng prng(99);
    Tape<float> tape;
    Tensor<float> x({8, 8});
    for (auto& v : x.values()) v = static_cast<float>(prng.normal());
    auto y = gelu(matmul(tape.constant(x), tape.constant(x)));
    return mean_all(y).value().item();
  };
  EXPECT_EQ(run(), run());
}

TEST(Kernels, BatchedRowsMatchSingleRowEvaluation) {
  Prng prng(5);
  const std::size_t k = 37, n = 29;
  std::vector<float> b(k * n), rows(6 * k);
  for (auto& v : b) v = static_cast<float>(prng.normal());
  for (auto& v : rows) v = static_cast<float>(prng.normal());
  std::vector<float> batched(6 * n), single(n);
  kernels::gemm(rows.data(), b.data(), batched.data(), 6, k, n, false);
  for (std::size_t r = 0; r < 6; ++r) {
    kernels::gemm(rows.data() + r * k, b.data(), single.data(), 1, k, n, false);
    for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(std::bit_cast<std::uint32_t>(single[j]),
                                                  std::bit_cast<std::uint32_t>(batched[r * n + j]));
  }
}
