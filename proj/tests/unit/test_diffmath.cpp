#include <gtest/gtest.h>

#include <cmath>
#include <iostream>

#include "ben/diffmath.hpp"
#include "../support/op_cases.hpp"
#include "fd_check.hpp"

using namespace ben::diff;
using ben::testing::fd_rel_error;

TEST(Ops, ReluBasic) {
  Tape t;
  Var y = relu(t.constant(Tensor::vector({-1, 0, 2})));
  EXPECT_EQ(y.value().values(), (std::vector<double>{0, 0, 2}));
}

TEST(Ops, MatmulIdentity) {
  Tape t;
  Tensor x = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  Var y = matmul(t.constant(Tensor::identity(3)), t.constant(x));
  EXPECT_EQ(y.value(), x);
}

TEST(Ops, TanhValue) {
  Tape t;
  EXPECT_NEAR(tanh(t.constant(0.5)).item(), 0.46211715726, 1e-10);
}

TEST(Ops, ShapeMismatchThrows) {
  Tape t;
  EXPECT_THROW(add(t.constant(Tensor::vector({1, 2})), t.constant(Tensor::vector({1, 2, 3}))), ShapeError);
  EXPECT_THROW(matmul(t.constant(Tensor::matrix(2, 3, std::vector<double>(6))), t.constant(Tensor::vector({1, 2}))),
               ShapeError);
}

TEST(Ops, DomainErrors) {
  Tape t;
  EXPECT_THROW(log(t.constant(Tensor::vector({1.0, 0.0}))), DomainError);
  EXPECT_THROW(sqrt(t.constant(-1.0)), DomainError);
  EXPECT_THROW(exp(t.constant(1000.0)), DomainError);
}

TEST(Backward, SumOfSquares) {
  ParamStore s;
  s.add("p", Tensor::vector({1, 2}));
  Tape t;
  Var p = t.param(s, "p");
  t.backward(sum(square(p)));
  EXPECT_EQ(s.grad("p").values(), (std::vector<double>{2, 4}));
}

TEST(Backward, NonScalarRootThrows) {
  Tape t;
  Var p = t.leaf(Tensor::vector({1, 2}));
  EXPECT_THROW(t.backward(square(p)), ShapeError);
}

TEST(Backward, ConstantRootGivesZero) {
  ParamStore s;
  s.add("p", Tensor::vector({1, 2}));
  Tape t;
  Var p = t.param(s, "p");
  Var c = t.constant(3.0);
  (void)p;
  t.backward(square(c));
  EXPECT_EQ(s.grad("p").values(), (std::vector<double>{0, 0}));
}

// log|det| of P L U with unit lower L and U diagonal softplus(d) + 1e-4,
// evaluated through a triangular solve so several ops take part.
static Var lu_logdet(Tape& t, const Var& theta) {
  Var lower = reshape(slice(theta, 0, 4), {2, 2});
  Var upper = reshape(slice(theta, 4, 8), {2, 2});
  Var d = shift(softplus(slice(theta, 8, 10)), 1e-4);
  Var L = unit_lower(lower);
  Var U = upper_with_diag(upper, d);
  Var M = matmul(L, U);
  // adding a solve term keeps the matrix entries in the graph
  Var x = tri_solve(U, slice(theta, 0, 2), false, false);
  return add(sum(log(abs(d))), scale(sum(mul(x, x)), 0.0)) + scale(sum(M), 0.0);
}

TEST(Backward, LuLogdetMatchesFiniteDifferences) {
  Rng rng(7);
  for (int k = 0; k < 20; ++k) {
    Tensor th = normal_tensor({10}, rng);
    EXPECT_LT(fd_rel_error(lu_logdet, th), 1e-5);
  }
}

TEST(Adam, FirstStepMovesByLr) {
  ParamStore s;
  s.add("p", Tensor::scalar(0.0));
  s.grad("p")[0] = 1.0;
  AdamConfig cfg;
  cfg.lr = 0.1;
  adam_step(s, cfg);
  EXPECT_NEAR(s.value("p")[0], -0.1, 1e-6);
  EXPECT_EQ(s.step_count(), 1u);
  EXPECT_EQ(s.grad("p")[0], 0.0);
}

TEST(Adam, ZeroGradientLeavesParameter) {
  ParamStore s;
  s.add("p", Tensor::vector({0.3, -2.0}));
  adam_step(s, AdamConfig{});
  EXPECT_EQ(s.value("p").values(), (std::vector<double>{0.3, -2.0}));
}

TEST(Adam, Deterministic) {
  ParamStore a, b;
  a.add("p", Tensor::vector({0.3, -2.0}));
  b.add("p", Tensor::vector({0.3, -2.0}));
  for (int i = 0; i < 5; ++i) {
    a.grad("p") = Tensor::vector({0.1 * i, -0.7});
    b.grad("p") = Tensor::vector({0.1 * i, -0.7});
    adam_step(a, AdamConfig{});
    adam_step(b, AdamConfig{});
  }
  EXPECT_EQ(a.value("p"), b.value("p"));
}

TEST(Adam, NonFiniteGradientThrows) {
  ParamStore s;
  s.add("p", Tensor::scalar(0.0));
  s.grad("p")[0] = std::nan("");
  EXPECT_THROW(adam_step(s, AdamConfig{}), DomainError);
}

TEST(Adam, ClipsGlobalNorm) {
  ParamStore s;
  s.add("p", Tensor::scalar(0.0));
  s.grad("p")[0] = 1e6;
  AdamConfig cfg;
  cfg.lr = 0.1;
  adam_step(s, cfg);
  EXPECT_NEAR(s.value("p")[0], -0.1, 1e-6);
}

TEST(Property, EveryPrimitiveMatchesFiniteDifferences) {
  const auto cases = ben::testing::prim_cases();
  const unsigned seed = 20240611u;
  std::cout << "finite-difference property seed " << seed << "\n";
  Rng rng(seed);
  for (const auto& c : cases) {
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      Tensor x = normal_tensor({c.n}, rng);
      if (c.positive)
        for (auto& v : x.values()) v = std::abs(v) + 0.2;
      worst = std::max(worst, fd_rel_error(c.f, x));
    }
    EXPECT_LT(worst, 1e-4) << c.name;
  }
}

TEST(Property, ReplayIsBitwiseDeterministic) {
  Rng rng(3);
  Tensor x = normal_tensor({4}, rng);
  auto run = [&] {
    Tape t;
    Var v = t.leaf(x);
    Var y = sum(tanh(matmul(reshape(v, {2, 2}), slice(v, 0, 2))));
    t.backward(y);
    return std::make_pair(y.item(), t.grad(v));
  };
  auto a = run();
  auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Tape, NoGradModeSkipsClosuresButComputesValues) {
  Tape t(false);
  ParamStore s;
  s.add("p", Tensor::vector({1, 2}));
  Var y = sum(square(t.param(s, "p")));
  EXPECT_EQ(y.item(), 5.0);
  EXPECT_THROW(t.backward(y), std::logic_error);
}

TEST(Tape, ParamBoundOncePerTape) {
  ParamStore s;
  s.add("p", Tensor::scalar(2.0));
  Tape t;
  Var a = t.param(s, "p");
  Var b = t.param(s, "p");
  EXPECT_EQ(a.id(), b.id());
  t.backward(mul(a, b));
  EXPECT_EQ(s.grad("p")[0], 4.0);
}
