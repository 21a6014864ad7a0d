#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mists/tensor.hpp"

namespace mists {

/// A scalar-valued tensor program over a list of inputs.
using ScalarProgram = std::function<Tensor(std::span<const Tensor>)>;

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares reverse-mode gradients with central differences of step `eps`.
/// Per coordinate the error is |a - n| / max(1, |a|, |n|).
GradCheckResult grad_check_detailed(const ScalarProgram& f,
                                    std::span<const Tensor> inputs, double eps);

double grad_check(const ScalarProgram& f, std::span<const Tensor> inputs,
                  double eps);

struct PrimitiveCheck {
  std::string name;
  GradCheckResult result;
};

/// Checks every differentiable primitive on random inputs. Each output is
/// contracted with fixed random weights so every coordinate gets a distinct
/// upstream gradient.
std::vector<PrimitiveCheck> check_all_primitives(double eps, std::uint64_t seed);

}  // namespace mists
