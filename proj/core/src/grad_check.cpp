#include "mists/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mists/rng.hpp"

namespace mists {

namespace {

double evaluate(const ScalarProgram& f, std::span<const Tensor> inputs,
                std::size_t input, std::size_t index) {
  const Tensor out = f(inputs);
  if (out.numel() != 1) {
    throw ShapeError(Primitive::kLeaf, out.shape(),
                     "grad_check program must return a scalar");
  }
  const double v = out.item();
  if (!std::isfinite(v)) {
    throw NonFiniteError("grad_check: non-finite value " + std::to_string(v) +
                         " while perturbing input " + std::to_string(input) +
                         " coordinate " + std::to_string(index));
  }
  return v;
}

}  // namespace

GradCheckResult grad_check_detailed(const ScalarProgram& f,
                                    std::span<const Tensor> inputs,
                                    double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) {
    throw std::invalid_argument("grad_check: eps must lie in (0, 1e-2]");
  }

  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& in : inputs) {
    Tensor leaf = in.detach();
    leaf.set_requires_grad(true);
    leaves.push_back(leaf);
  }

  const Tensor loss = f(leaves);
  if (loss.numel() != 1) {
    throw ShapeError(Primitive::kLeaf, loss.shape(),
                     "grad_check program must return a scalar");
  }
  if (!std::isfinite(loss.item())) {
    throw NonFiniteError("grad_check: non-finite value at the unperturbed point");
  }
  std::vector<std::vector<double>> analytic(leaves.size());
  if (loss.requires_grad()) {
    loss.backward();
  }
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    if (leaves[k].has_grad()) {
      analytic[k].assign(leaves[k].grad().begin(), leaves[k].grad().end());
    } else {
      analytic[k].assign(leaves[k].numel(), 0.0);
    }
  }

  GradCheckResult result;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    auto values = leaves[k].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = evaluate(f, leaves, k, i);
      values[i] = saved - eps;
      const double down = evaluate(f, leaves, k, i);
      values[i] = saved;

      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      const double err = std::abs(a - numeric) /
                         std::max({1.0, std::abs(a), std::abs(numeric)});
      if (err > result.max_relative_error) {
        result = {err, k, i, a, numeric};
      }
    }
  }
  return result;
}

double grad_check(const ScalarProgram& f, std::span<const Tensor> inputs,
                  double eps) {
  return grad_check_detailed(f, inputs, eps).max_relative_error;
}

std::vector<PrimitiveCheck> check_all_primitives(double eps, std::uint64_t seed) {
  Engine engine = make_engine(seed, "gradcheck");
  auto random = [&](Shape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = d(engine);
    return Tensor(std::move(shape), std::move(v));
  };
  // Values away from zero keep relu off its kink.
  auto away_from_zero = [&](Shape shape) {
    Tensor t = random(std::move(shape), 0.2, 1.0);
    auto v = t.mutable_values();
    for (std::size_t i = 0; i < v.size(); i += 2) v[i] = -v[i];
    return t;
  };

  struct Case {
    std::string name;
    std::vector<Tensor> inputs;
    std::function<Tensor(std::span<const Tensor>)> op;
  };
  using In = std::span<const Tensor>;
  std::vector<Case> cases = {
      {"matmul", {random({3, 4}), random({4, 2})}, [](In x) { return matmul(x[0], x[1]); }},
      {"add", {random({3, 2}), random({3, 2})}, [](In x) { return add(x[0], x[1]); }},
      {"sub", {random({3, 2}), random({3, 2})}, [](In x) { return sub(x[0], x[1]); }},
      {"mul", {random({3, 2}), random({3, 2})}, [](In x) { return mul(x[0], x[1]); }},
      {"scale", {random({3, 2})}, [](In x) { return scale(x[0], -1.7); }},
      {"neg", {random({3, 2})}, [](In x) { return neg(x[0]); }},
      {"tanh", {random({3, 2}, -2.0, 2.0)}, [](In x) { return tanh(x[0]); }},
      {"sigmoid", {random({3, 2}, -3.0, 3.0)}, [](In x) { return sigmoid(x[0]); }},
      {"relu", {away_from_zero({3, 2})}, [](In x) { return relu(x[0]); }},
      {"exp", {random({3, 2})}, [](In x) { return exp(x[0]); }},
      {"log", {random({3, 2}, 0.5, 2.0)}, [](In x) { return log(x[0]); }},
      {"square", {random({3, 2})}, [](In x) { return square(x[0]); }},
      {"sum", {random({3, 2})}, [](In x) { return sum(x[0]); }},
      {"mean", {random({3, 2})}, [](In x) { return mean(x[0]); }},
      {"sum_axis0", {random({3, 2})}, [](In x) { return sum(x[0], 0); }},
      {"sum_axis1", {random({3, 2})}, [](In x) { return sum(x[0], 1); }},
      {"mean_axis0", {random({3, 2})}, [](In x) { return mean(x[0], 0); }},
      {"mean_axis1", {random({3, 2})}, [](In x) { return mean(x[0], 1); }},
      {"concat_axis0", {random({2, 3}), random({1, 3})},
       [](In x) { return concat({x[0], x[1]}, 0); }},
      {"concat_axis1", {random({2, 3}), random({2, 2})},
       [](In x) { return concat({x[0], x[1]}, 1); }},
      {"slice", {random({3, 4})}, [](In x) { return slice(x[0], 1, 1, 3); }},
      {"softmax_axis0", {random({3, 2}, -2.0, 2.0)}, [](In x) { return softmax(x[0], 0); }},
      {"softmax_axis1", {random({3, 4}, -2.0, 2.0)}, [](In x) { return softmax(x[0], 1); }},
      {"logsumexp_axis0", {random({3, 2}, -2.0, 2.0)},
       [](In x) { return logsumexp(x[0], 0); }},
      {"logsumexp_axis1", {random({3, 4}, -2.0, 2.0)},
       [](In x) { return logsumexp(x[0], 1); }},
      {"add_row", {random({3, 2}), random({1, 2})}, [](In x) { return add_row(x[0], x[1]); }},
      {"transpose", {random({3, 2})}, [](In x) { return transpose(x[0]); }},
  };

  std::vector<PrimitiveCheck> out;
  out.reserve(cases.size());
  for (Case& c : cases) {
    const Tensor probe = c.op(c.inputs);
    const Tensor weights = random(probe.shape());
    const auto op = c.op;
    const ScalarProgram f = [op, weights](std::span<const Tensor> x) {
      return sum(op(x) * weights);
    };
    out.push_back({c.name, grad_check_detailed(f, c.inputs, eps)});
  }
  return out;
}

}  // namespace mists
