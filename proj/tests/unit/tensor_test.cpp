#include <cmath>
#include <random>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "mists/grad_check.hpp"
#include "mists/tensor.hpp"
#include "support.hpp"

namespace mists {
namespace {

TEST(Tensor, ConstructionAndAccess) {
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_DOUBLE_EQ(t.at(1, 2), 6.0);
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor::zeros({0, 2}), ShapeError);
}

TEST(Tensor, MatmulMatchesHandComputation) {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor b({2, 1}, {5, 6});
  const Tensor c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_DOUBLE_EQ(c[0], 17.0);
  EXPECT_DOUBLE_EQ(c[1], 39.0);
  EXPECT_THROW(matmul(a, Tensor::zeros({3, 1})), ShapeError);
}

TEST(Tensor, ElementwiseRequiresEqualShapes) {
  EXPECT_THROW(add(Tensor::zeros({2, 2}), Tensor::zeros({1, 2})), ShapeError);
  EXPECT_THROW(mul(Tensor::zeros({2, 1}), Tensor::zeros({1, 2})), ShapeError);
  const Tensor r = add_row(Tensor::zeros({3, 2}), Tensor::row({1.0, -1.0}));
  EXPECT_DOUBLE_EQ(r.at(2, 0), 1.0);
  EXPECT_DOUBLE_EQ(r.at(2, 1), -1.0);
}

TEST(Tensor, AxisReductionsKeepTheAxis) {
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(sum(t, 0).shape(), (Shape{1, 3}));
  EXPECT_EQ(sum(t, 1).shape(), (Shape{2, 1}));
  EXPECT_DOUBLE_EQ(sum(t, 1)[1], 15.0);
  EXPECT_DOUBLE_EQ(mean(t, 0)[2], 4.5);
  EXPECT_DOUBLE_EQ(sum(t).item(), 21.0);
}

TEST(Tensor, SoftmaxAndLogSumExpAreStable) {
  const Tensor big({1, 3}, {1000.0, 1000.0, 1000.0});
  const Tensor s = softmax(big, 1);
  for (double v : s.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(logsumexp(big, 1).item(), 1000.0 + std::log(3.0), 1e-12);
}

TEST(Tensor, LogRejectsNonPositiveInput) {
  EXPECT_THROW(log(Tensor({1, 2}, {1.0, 0.0})), DomainError);
}

TEST(Tensor, ConcatSliceTranspose) {
  const Tensor a({2, 1}, {1, 2});
  const Tensor b({2, 2}, {3, 4, 5, 6});
  const Tensor c = concat({a, b}, 1);
  EXPECT_EQ(c.shape(), (Shape{2, 3}));
  EXPECT_DOUBLE_EQ(c.at(1, 0), 2.0);
  EXPECT_DOUBLE_EQ(c.at(1, 2), 6.0);
  const Tensor s = slice(c, 1, 1, 3);
  EXPECT_DOUBLE_EQ(s.at(0, 0), 3.0);
  const Tensor tr = transpose(b);
  EXPECT_DOUBLE_EQ(tr.at(0, 1), 5.0);
  EXPECT_THROW(slice(c, 1, 2, 5), ShapeError);
}

TEST(Tensor, BackwardOfSquareIsTwiceInput) {
  Tensor x({1, 3}, {1.0, -2.0, 0.5});
  x.set_requires_grad();
  sum(square(x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -4.0);
  EXPECT_DOUBLE_EQ(x.grad()[2], 1.0);
}

TEST(Tensor, GradientsAccumulateOverSharedUses) {
  Tensor x = Tensor::scalar(3.0);
  x.set_requires_grad();
  (x * x + x).backward();  // d/dx (x^2 + x) = 7
  EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
}

TEST(Tensor, SecondBackwardOnSameGraphThrows) {
  Tensor x = Tensor::scalar(1.0);
  x.set_requires_grad();
  const Tensor y = exp(x);
  y.backward();
  EXPECT_THROW(y.backward(), std::logic_error);
}

TEST(Tensor, DetachCutsTheGraph) {
  Tensor x = Tensor::scalar(2.0);
  x.set_requires_grad();
  const Tensor y = x * x.detach();
  y.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
}

TEST(GradCheck, EveryPrimitivePasses) {
  for (const PrimitiveCheck& c : check_all_primitives(1e-5, 0)) {
    EXPECT_LT(c.result.max_relative_error, 1e-5) << c.name;
  }
}

TEST(GradCheck, CoversEveryOperationKind) {
  const auto checks = check_all_primitives(1e-5, 1);
  std::set<std::string> names;
  for (const auto& c : checks) names.insert(c.name);
  for (const char* op : {"matmul", "add", "sub", "mul", "scale", "neg", "tanh", "sigmoid",
                         "relu", "exp", "log", "square", "sum", "mean", "concat_axis0",
                         "slice", "softmax_axis1", "logsumexp_axis1", "add_row",
                         "transpose"}) {
    EXPECT_TRUE(names.count(op)) << op;
  }
}

TEST(GradCheck, DetectsAWrongGradient) {
  // x * detach(x) has analytic gradient x but true derivative 2x.
  const ScalarProgram f = [](std::span<const Tensor> in) {
    return sum(in[0] * in[0].detach());
  };
  std::mt19937_64 rng(3);
  const Tensor x = test::random_tensor(rng, {2, 2}, 0.5, 1.0);
  EXPECT_GT(grad_check(f, std::span<const Tensor>(&x, 1), 1e-5), 0.1);
}

TEST(GradCheck, MatchesHandDerivativeOfComposite) {
  // f(a) = sum(tanh(a W)); compare against an independent finite difference.
  std::mt19937_64 rng(5);
  const Tensor W = test::random_tensor(rng, {3, 2});
  const Tensor a = test::random_tensor(rng, {2, 3});
  const ScalarProgram f = [&W](std::span<const Tensor> in) {
    return sum(tanh(matmul(in[0], W)));
  };
  const GradCheckResult r = grad_check_detailed(f, std::span<const Tensor>(&a, 1), 1e-5);
  EXPECT_LT(r.max_relative_error, 1e-8);
}

TEST(GradCheck, RejectsBadStep) {
  const ScalarProgram f = [](std::span<const Tensor> in) { return sum(in[0]); };
  const Tensor x = Tensor::scalar(1.0);
  EXPECT_THROW(grad_check(f, std::span<const Tensor>(&x, 1), 0.0), std::invalid_argument);
}

}  // namespace
}  // namespace mists
