#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mists/config.hpp"
#include "mists/datagen.hpp"
#include "mists/tensor.hpp"

namespace mists {

/// Base encoder plus a single linear head, trained on pooled source data.
struct ErmParams {
  std::size_t input_dim = 2;
  std::size_t n_classes = 2;
  std::size_t hidden = 32;

  Tensor input_shift, input_scale;
  Tensor theta_W, theta_b;
  Tensor head_W, head_b;

  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
  std::vector<Tensor> trainable() const;
};

ErmParams init_erm_params(std::size_t input_dim, std::size_t n_classes,
                          std::size_t hidden, std::uint64_t seed);

/// Logits n x C; ignores domain structure.
Tensor predict_erm(const ErmParams& params, const Tensor& X);

/// ERM on pooled source batches with the same optimizer, epochs and batch size
/// as MISTS (one step per source domain per epoch). A positive `irm_weight`
/// adds that multiple of the scalar-multiplier penalty over the domains in
/// each batch.
ErmParams train_erm_baseline(const DomainStream& source, const TrainConfig& config,
                             double irm_weight = 0.0);

/// A domain's risk as a function of the scalar multiplier w on its logits.
using ScalarRisk = std::function<Tensor(const Tensor& w)>;

/// Sum over domains of (d risk / d w at w = 1)^2, by reverse-mode autodiff.
double irm_penalty(std::span<const ScalarRisk> per_domain_risks);

/// d/dw of mean cross-entropy(w * logits) at w = 1, in closed form:
/// mean_i sum_c (softmax(logits_i)_c - onehot_c) logits_ic. Differentiable in logits.
Tensor irm_gradient_at_one(const Tensor& logits, std::span<const int> labels);

}  // namespace mists
