#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fd.hpp"
#include "se/errors.hpp"
#include "se/grad/tape.hpp"
#include "se/optim/adam.hpp"

namespace se::grad {
namespace {

using se::testing::central_difference;
using se::testing::max_relative_error;

std::vector<double> as_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

TEST(Tensor, ShapesAndItem) {
  const Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_DOUBLE_EQ(m.at(1, 2), 6.0);
  EXPECT_DOUBLE_EQ(Tensor::scalar(4.5).item(), 4.5);
  EXPECT_THROW(m.item(), ContractError);
  EXPECT_THROW(Tensor::matrix(2, 2, {1, 2, 3}), DimensionError);
}

TEST(TapeForward, AddElementwise) {
  Tape tape;
  const Var c = add(tape.constant(Tensor::vector({1, 2})), tape.constant(Tensor::vector({3, 4})));
  EXPECT_EQ(as_vector(c.value()), (std::vector<double>{4, 6}));
}

TEST(TapeForward, MatmulIdentity) {
  Tape tape;
  const Var v = matmul(tape.constant(Tensor::identity(2)), tape.constant(Tensor::vector({0.7, -3.0})));
  EXPECT_EQ(as_vector(v.value()), (std::vector<double>{0.7, -3.0}));
}

TEST(TapeForward, LogOfExp) {
  Tape tape;
  const Var v = log(exp(tape.constant(Tensor::vector({0.5, -1.2}))));
  EXPECT_NEAR(v.value()[0], 0.5, 1e-15);
  EXPECT_NEAR(v.value()[1], -1.2, 1e-15);
}

TEST(TapeForward, ShapeMismatchThrows) {
  Tape tape;
  EXPECT_THROW(add(tape.constant(Tensor::vector({1, 2, 3})), tape.constant(Tensor::vector({1, 2}))), DimensionError);
  EXPECT_THROW(matmul(tape.constant(Tensor::zeros(2, 3)), tape.constant(Tensor::zeros(2, 3))), DimensionError);
}

TEST(TapeForward, NonFiniteThrows) {
  Tape tape;
  EXPECT_THROW(log(tape.constant(Tensor::vector({-1.0}))), NumericError);
  EXPECT_THROW(tape.variable(Tensor::vector({std::nan("")})), NumericError);
}

TEST(TapeBackward, SumOfSquares) {
  Tape tape;
  const Var x = tape.variable(Tensor::vector({1, 2, 3}));
  const Gradients g = tape.backward(sum(mul(x, x)));
  EXPECT_EQ(as_vector(g.wrt(x)), (std::vector<double>{2, 4, 6}));
}

TEST(TapeBackward, Log) {
  Tape tape;
  const Var x = tape.variable(Tensor::vector({2.0}));
  EXPECT_DOUBLE_EQ(tape.backward(sum(log(x))).wrt(x)[0], 0.5);
}

TEST(TapeBackward, TanhMatchesFiniteDifference) {
  Tape tape;
  const Var x = tape.variable(Tensor::vector({0.3}));
  const double g = tape.backward(sum(tanh(x))).wrt(x)[0];
  const double h = 1e-5;
  EXPECT_NEAR(g, (std::tanh(0.3 + h) - std::tanh(0.3 - h)) / (2 * h), 1e-6);
}

TEST(TapeBackward, ConstantsGetNoGradient) {
  Tape tape;
  const Var x = tape.variable(Tensor::vector({1.0, 2.0}));
  const Var c = tape.constant(Tensor::vector({3.0, 4.0}));
  const Gradients g = tape.backward(sum(mul(x, c)));
  EXPECT_FALSE(g.touched(c.id));
  EXPECT_EQ(as_vector(g.wrt(x)), (std::vector<double>{3.0, 4.0}));
}

TEST(TapeBackward, FanOutAccumulates) {
  Tape tape;
  const Var x = tape.variable(Tensor::scalar(3.0));
  const Var y = add(mul(x, x), scale(x, 2.0));
  EXPECT_DOUBLE_EQ(tape.backward(sum(y)).wrt(x)[0], 8.0);
}

TEST(TapeBackward, NonScalarRootThrows) {
  Tape tape;
  const Var x = tape.variable(Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(tape.backward(x), ContractError);
}

// Builds a composite graph touching every op from a flat parameter vector
// and returns its scalar value and analytic gradient.
struct Composite {
  static constexpr std::size_t kRows = 3, kIn = 4, kOut = 5;
  static constexpr std::size_t kSize = kRows * kIn + kIn * kOut + kOut;

  static double value(const std::vector<double>& p) { return run(p, nullptr); }

  static double run(const std::vector<double>& p, std::vector<double>* grad) {
    Tape tape;
    const Var x = tape.variable(Tensor::matrix(kRows, kIn, {p.begin(), p.begin() + kRows * kIn}));
    const Var w = tape.variable(Tensor::matrix(kIn, kOut, {p.begin() + kRows * kIn, p.begin() + kRows * kIn + kIn * kOut}));
    const Var b = tape.variable(Tensor::vector(std::vector<double>(p.end() - kOut, p.end())));
    const Var h = tanh(affine(x, w, b));
    const Var r = relu(add(slice(h, 0, 2), tape.constant(Tensor::vector({0.1, -0.2}))));
    const Var e = exp(scale(slice(h, 2, 5), 0.5));
    const Var l = log(add(mul(e, e), tape.constant(Tensor::scalar(1.0))));
    const Var joined = concat({r, l, sub(matmul(x, w), h)});
    const Var root = add(mean(sum_rows(mul(joined, joined))), sum(x));
    if (grad != nullptr) {
      const Gradients g = tape.backward(root);
      grad->clear();
      for (const Var v : {x, w, b}) {
        const auto vals = g.wrt(v).values();
        grad->insert(grad->end(), vals.begin(), vals.end());
      }
    }
    return root.value().item();
  }
};

TEST(TapeBackward, CompositeGraphMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal(0.0, 0.7);
  for (int instance = 0; instance < 20; ++instance) {
    std::vector<double> p(Composite::kSize);
    for (double& v : p) v = normal(rng);
    std::vector<double> analytic;
    Composite::run(p, &analytic);
    const auto numeric = central_difference(&Composite::value, p);
    EXPECT_LT(max_relative_error(analytic, numeric), 1e-4) << "instance " << instance;
  }
}

TEST(TapeBackward, BroadcastReducesGradient) {
  Tape tape;
  const Var a = tape.variable(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  const Var row = tape.variable(Tensor::vector({1, 1, 1}));
  const Var col = tape.variable(Tensor::matrix(2, 1, {2, 3}));
  const Gradients g = tape.backward(sum(mul(add(a, row), col)));
  EXPECT_EQ(as_vector(g.wrt(row)), (std::vector<double>{5, 5, 5}));
  EXPECT_EQ(as_vector(g.wrt(col)), (std::vector<double>{9, 18}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor p = Tensor::vector({1.0, -1.0});
  const Tensor g = Tensor::vector({0.3, -20.0});
  std::vector<const Tensor*> params{&p};
  optim::Adam adam(optim::AdamConfig{0.1}, params);
  std::vector<Tensor*> mut{&p};
  std::vector<const Tensor*> grads{&g};
  adam.step(mut, grads);
  EXPECT_NEAR(p[0], 0.9, 1e-6);
  EXPECT_NEAR(p[1], -0.9, 1e-6);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(Adam, MinimisesQuadratic) {
  Tensor p = Tensor::vector({3.0, -2.0});
  std::vector<const Tensor*> params{&p};
  optim::Adam adam(optim::AdamConfig{0.05}, params);
  std::vector<Tensor*> mut{&p};
  for (int i = 0; i < 2000; ++i) {
    const Tensor g = Tensor::vector({2.0 * (p[0] - 1.0), 2.0 * (p[1] + 0.5)});
    std::vector<const Tensor*> grads{&g};
    adam.step(mut, grads);
  }
  EXPECT_NEAR(p[0], 1.0, 1e-3);
  EXPECT_NEAR(p[1], -0.5, 1e-3);
}

}  // namespace
}  // namespace se::grad
