#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "mists/config.hpp"
#include "mists/datagen.hpp"
#include "mists/model.hpp"
#include "mists/objectives.hpp"
#include "mists/rng.hpp"

namespace mists {

/// A loss or gradient became non-finite; `term()` names the offending component.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(std::string term, LossBreakdown breakdown, const std::string& where);
  const std::string& term() const { return term_; }
  const LossBreakdown& breakdown() const { return breakdown_; }

 private:
  std::string term_;
  LossBreakdown breakdown_;
};

struct AdamState {
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// Bias-corrected Adam update applied in place to leaf tensors.
void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads,
               AdamState& state, const TrainConfig& config);

/// Rescales `grads` so their global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
double clip_global_norm(std::vector<std::vector<double>>& grads, double max_norm);

/// Recurrent states and carried latents threaded through the domain sequence.
struct SequenceState {
  RecurrentState pi_q, pi_p, tau_q, tau_p;
  Tensor prev_z;  // 1 x d_zt
  Tensor prev_w;  // 1 x K

  static SequenceState initial(const ModelDims& dims);
  SequenceState detach() const;
};

/// Exogenous noise for one domain's reparameterised samples.
struct DomainNoise {
  Tensor zc;      // n x d_zc
  Tensor zt;      // 1 x d_zt
  Tensor gumbel;  // 1 x K

  static DomainNoise draw(Engine& engine, std::size_t n, const ModelDims& dims);
};

/// One domain of the training forward pass; advances `state`.
DomainForward forward_domain(const ModelParams& params, const Tensor& X,
                             std::span<const int> labels, SequenceState& state,
                             const DomainNoise& noise, const TrainConfig& config,
                             const AblationSpec& ablation = {});

/// Pooled per-feature mean and inverse standard deviation, each 1 x d.
std::pair<Tensor, Tensor> input_standardisation(const DomainStream& source);

/// Sets the model's input standardisation from `source`.
void fit_input_standardisation(ModelParams& params, const DomainStream& source);

struct TrainHistory {
  std::vector<LossBreakdown> epochs;
  std::vector<double> seconds;

  std::size_t size() const { return epochs.size(); }
  std::string to_csv() const;
  void save_csv(const std::filesystem::path& path) const;
};

struct TrainResult {
  ModelParams params;
  TrainHistory history;
};

using EpochObserver = std::function<void(std::size_t epoch, const LossBreakdown&)>;

/// Row indices of the batch drawn for (epoch, domain): a seeded shuffle,
/// truncated to min(batch_size, n).
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t epoch,
                                       int domain, std::size_t n,
                                       std::size_t batch_size);

/// Gathers rows of a domain into a tensor plus labels.
Tensor gather_rows(const Matrix& X, std::span<const std::size_t> rows);

TrainResult train(const DomainStream& source, const TrainConfig& config,
                  const AblationSpec& ablation = {}, const EpochObserver& observer = {});

/// Collects gradients of `params` into dense vectors (zeros where absent).
std::vector<std::vector<double>> collect_grads(std::span<const Tensor> params);

}  // namespace mists
