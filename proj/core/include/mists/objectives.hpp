#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mists/distributions.hpp"
#include "mists/tensor.hpp"

namespace mists {

/// Loss components in minimisation form:
/// total = recon + alpha (kl_static + kl_dynamic)
///         - beta (mi_zc_x + mi_zt_x - mi_zc_zt)
///         + lambda (cls_nll + alpha kl_classifier).
struct LossBreakdown {
  double recon = 0.0;
  double kl_static = 0.0;
  double kl_dynamic = 0.0;
  double kl_classifier = 0.0;
  double mi_zc_x = 0.0;
  double mi_zt_x = 0.0;
  double mi_zc_zt = 0.0;
  double cls_nll = 0.0;
  double total = 0.0;

  static const std::vector<std::string>& field_names();
  std::vector<double> values() const;
  /// Name of the first non-finite component, if any.
  std::optional<std::string> first_non_finite() const;
  std::string to_json() const;

  LossBreakdown& operator+=(const LossBreakdown& other);
  LossBreakdown scaled(double factor) const;
};

/// Everything one domain's forward pass produces.
struct DomainForward {
  Tensor x;      // n x d reconstruction targets
  Tensor x_hat;  // n x d
  GaussianParams zc_post;  // n rows
  Tensor zc_sample;        // n x d_zc
  GaussianParams zt_post;  // 1 row
  GaussianParams zt_prior;  // 1 row
  Tensor zt_sample;         // 1 x d_zt
  Tensor logits;            // n x C
  std::vector<int> labels;
  /// Absent when the classifier latent is disabled.
  std::optional<CategoricalParams> w_post;
  std::optional<CategoricalParams> w_prior;

  std::size_t size() const { return labels.size(); }
};

/// Detached latent samples from earlier domains, pooled into the MI estimates.
///
/// z_t is one value per domain, so a single domain batch carries no
/// information about I(z_t; x) or I(z_c; z_t); the pool supplies the other
/// domains' rows.
class MiMemory {
 public:
  explicit MiMemory(std::size_t rows_per_domain = 8) : per_domain_(rows_per_domain) {}

  void append(const DomainForward& forward);
  void clear();
  std::size_t rows() const { return rows_; }
  std::size_t rows_per_domain() const { return per_domain_; }

  struct Pool {
    Tensor zc, zc_mu, zc_logvar, zt, zt_mu, zt_logvar;
  };
  /// Memory rows; undefined tensors when empty.
  Pool pool() const;

 private:
  std::size_t per_domain_;
  std::size_t rows_ = 0;
  std::vector<Tensor> zc_, zc_mu_, zc_logvar_, zt_, zt_mu_, zt_logvar_;
};

/// 0.5 * ||x - x_hat||^2 summed over all entries.
Tensor reconstruction_loss(const Tensor& x, const Tensor& x_hat);

/// Minibatch estimate of I(z; x) with the equal-weight batch mixture as q(z).
Tensor mi_minibatch(const Tensor& samples, const GaussianParams& params);

/// Minibatch estimate of I(z_c; z_t) with joint q(z_c|x_j) q(z_t|x_j).
Tensor mi_cross_minibatch(const Tensor& zc_samples, const GaussianParams& zc_params,
                          const Tensor& zt_samples, const GaussianParams& zt_params);

/// Sequential autoencoder objective summed over the given domains. MI terms
/// use the pool of all given domains plus `memory` and count once per domain.
std::pair<Tensor, LossBreakdown> elbo_e(std::span<const DomainForward> domains,
                                        double alpha, double beta,
                                        const MiMemory* memory = nullptr);

/// lambda * sum_t [mean cross-entropy + alpha KL(q(w_t) || p(w_t))].
std::pair<Tensor, LossBreakdown> loss_c(std::span<const DomainForward> domains,
                                        double lambda, double alpha);

std::pair<Tensor, LossBreakdown> total_loss(std::span<const DomainForward> domains,
                                            double alpha, double beta, double lambda,
                                            const MiMemory* memory = nullptr);

/// |E_x KL(q(z|x) || p(z)) - (I(z; x) + KL(q(z) || p(z)))| by enumeration.
/// `joint[x][z]` is q(x, z); `prior[z]` is p(z).
double kl_mi_identity_residual(const std::vector<std::vector<double>>& joint,
                               const std::vector<double>& prior);

}  // namespace mists
