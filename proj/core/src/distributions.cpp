#include "mists/distributions.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace mists {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void require_same(const char* what, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
}

}  // namespace

GaussianParams GaussianParams::standard(std::size_t rows, std::size_t dim) {
  return {Tensor::zeros({rows, dim}), Tensor::zeros({rows, dim})};
}

Tensor CategoricalParams::probabilities() const {
  return softmax(logits, logits.rank() - 1);
}

Tensor gaussian_sample(const GaussianParams& params, const Tensor& noise) {
  require_same("gaussian_sample", params.mu, params.logvar);
  require_same("gaussian_sample", params.mu, noise);
  return params.mu + exp(scale(params.logvar, 0.5)) * noise;
}

Tensor gaussian_kl(const GaussianParams& q, const GaussianParams& p) {
  require_same("gaussian_kl", q.mu, p.mu);
  require_same("gaussian_kl", q.logvar, p.logvar);
  require_same("gaussian_kl", q.mu, q.logvar);
  const Tensor inv_p = exp(neg(p.logvar));
  const Tensor terms = exp(q.logvar - p.logvar) +
                       square(q.mu - p.mu) * inv_p + p.logvar - q.logvar;
  const double d = static_cast<double>(q.mu.numel());
  return scale(sum(terms), 0.5) - Tensor::scalar(0.5 * d);
}

Tensor gaussian_log_density(const Tensor& x, const GaussianParams& params) {
  require_same("gaussian_log_density", x, params.mu);
  require_same("gaussian_log_density", x, params.logvar);
  const Tensor quad = square(x - params.mu) * exp(neg(params.logvar));
  const double d = static_cast<double>(x.numel());
  return scale(sum(params.logvar + quad), -0.5) -
         Tensor::scalar(0.5 * d * kLog2Pi);
}

Tensor pairwise_log_density(const Tensor& samples, const GaussianParams& params) {
  require_same("pairwise_log_density", samples, params.mu);
  require_same("pairwise_log_density", samples, params.logvar);
  const std::size_t b = samples.rows();
  const std::size_t d = samples.cols();
  // (z_i - mu_j)^2 / v_j = z_i^2 / v_j - 2 z_i mu_j / v_j + mu_j^2 / v_j
  const Tensor inv_var = exp(neg(params.logvar));
  const Tensor quad_zz = matmul(square(samples), transpose(inv_var));
  const Tensor quad_zm = matmul(samples, transpose(params.mu * inv_var));
  const Tensor per_j = transpose(
      sum(params.logvar + square(params.mu) * inv_var, 1));  // 1 x B
  const Tensor quad = quad_zz - scale(quad_zm, 2.0);
  const Tensor total = add_row(quad, per_j);
  return scale(total, -0.5) -
         Tensor::full({b, b}, 0.5 * static_cast<double>(d) * kLog2Pi);
}

Tensor categorical_kl(const CategoricalParams& q, const CategoricalParams& p) {
  require_same("categorical_kl", q.logits, p.logits);
  const std::size_t axis = q.logits.rank() - 1;
  const std::size_t k = q.logits.shape()[axis];
  auto log_softmax = [&](const Tensor& logits) {
    const Tensor lse = logsumexp(logits, axis);
    // Repeat the normaliser across the axis without broadcasting.
    const Tensor lse_rep = matmul(lse, Tensor::ones({1, k}));
    return logits - lse_rep;
  };
  if (q.logits.rank() != 2) {
    throw std::invalid_argument("categorical_kl: logits must be 1 x K");
  }
  const Tensor log_q = log_softmax(q.logits);
  const Tensor log_p = log_softmax(p.logits);
  return sum(softmax(q.logits, axis) * (log_q - log_p));
}

Tensor gumbel_softmax(const CategoricalParams& params, double temperature,
                      const Tensor& gumbel_noise) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("gumbel_softmax: temperature must be positive");
  }
  require_same("gumbel_softmax", params.logits, gumbel_noise);
  return softmax(scale(params.logits + gumbel_noise, 1.0 / temperature),
                 params.logits.rank() - 1);
}

Tensor one_hot(std::span<const int> labels, std::size_t classes) {
  std::vector<double> values(labels.size() * classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw std::out_of_range("label " + std::to_string(labels[i]) +
                              " outside [0, " + std::to_string(classes) + ")");
    }
    values[i * classes + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return Tensor({labels.size(), classes}, std::move(values));
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.rows() != labels.size()) {
    throw std::invalid_argument(
        "cross_entropy: logits " + shape_string(logits.shape()) + " vs " +
        std::to_string(labels.size()) + " labels");
  }
  const Tensor picked = sum(logits * one_hot(labels, logits.cols()), 1);
  return mean(logsumexp(logits, 1) - picked);
}

Tensor soft_clamp(const Tensor& x, double bound) {
  return scale(tanh(scale(x, 1.0 / bound)), bound);
}

}  // namespace mists
