#pragma once

#include <span>

#include "mists/tensor.hpp"

namespace mists {

/// Diagonal Gaussian, one distribution per row of `mu` / `logvar`.
struct GaussianParams {
  Tensor mu;
  Tensor logvar;

  std::size_t rows() const { return mu.rows(); }
  std::size_t dim() const { return mu.cols(); }
  GaussianParams detach() const { return {mu.detach(), logvar.detach()}; }
  static GaussianParams standard(std::size_t rows, std::size_t dim);
};

/// Categorical over K outcomes given by unnormalised logits (1 x K).
struct CategoricalParams {
  Tensor logits;

  std::size_t size() const { return logits.numel(); }
  Tensor probabilities() const;
};

/// mu + exp(0.5 * logvar) * noise.
Tensor gaussian_sample(const GaussianParams& params, const Tensor& noise);

/// KL(q || p) summed over every coordinate of every row.
Tensor gaussian_kl(const GaussianParams& q, const GaussianParams& p);

/// log N(x; mu, diag(exp(logvar))) summed over every coordinate of every row.
Tensor gaussian_log_density(const Tensor& x, const GaussianParams& params);

/// B x B matrix whose (i, j) entry is log q(samples_i | params_j).
Tensor pairwise_log_density(const Tensor& samples, const GaussianParams& params);

Tensor categorical_kl(const CategoricalParams& q, const CategoricalParams& p);

/// softmax((logits + gumbel_noise) / temperature).
Tensor gumbel_softmax(const CategoricalParams& params, double temperature,
                      const Tensor& gumbel_noise);

/// Mean over rows of logsumexp(logits_i) - logits_i[label_i].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Bounds `logvar` smoothly to (-bound, bound) via bound * tanh(x / bound).
Tensor soft_clamp(const Tensor& x, double bound);

/// Row matrix of one-hot codes (n x classes).
Tensor one_hot(std::span<const int> labels, std::size_t classes);

}  // namespace mists
