#pragma once

#include <array>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mists/baselines.hpp"
#include "mists/config.hpp"
#include "mists/datagen.hpp"
#include "mists/model.hpp"
#include "mists/tensor.hpp"

namespace mists {

/// Logits for every sample of one domain (n x C).
struct DomainPrediction {
  int index = 0;
  Tensor logits;
};
using Predictions = std::vector<DomainPrediction>;

struct Metrics {
  std::map<int, double> per_domain;
  double average = 0.0;
  std::map<int, std::size_t> n;

  /// `{"per_domain": {...}, "average": ..., "n": {...}}` plus any extra keys.
  std::string to_json(const std::map<std::string, std::string>& extra = {}) const;
};

/// Domain-level latents used at prediction time.
struct DomainLatents {
  int index = 0;
  Tensor z_t;  // 1 x d_zt, posterior mean
  Tensor w;    // 1 x K, hard one-hot
  bool rolled_out = false;
};

/// Replays the labelled source domains (posterior means, posterior argmax w),
/// then rolls forward through `targets`: w from the argmax of tau_p, z_t from
/// pi_q on the target batch's pooled features. Labels of targets are never seen.
std::vector<DomainLatents> infer_domain_latents(const ModelParams& params,
                                                const DomainStream& source,
                                                std::span<const UnlabeledDomain> targets,
                                                const AblationSpec& ablation = {});

/// Logits for `X` at a domain with the given latents; z_c is the kappa_c mean.
Tensor predict_with_latents(const ModelParams& params, const Tensor& X,
                            const DomainLatents& latents,
                            const AblationSpec& ablation = {});

/// Sequential inference into unseen domains, one batch per target domain.
Predictions rollout_predict(const ModelParams& params, const DomainStream& source,
                            std::span<const UnlabeledDomain> targets,
                            const AblationSpec& ablation = {});

Predictions predict_erm_domains(const ErmParams& params,
                                std::span<const UnlabeledDomain> targets);

/// Per-domain argmax accuracy and their unweighted mean.
Metrics evaluate(const Predictions& predictions, const DomainStream& targets);

/// Validation metrics on the intermediate domains and test metrics on the
/// targets of one split.
struct SplitMetrics {
  Metrics validation;
  Metrics target;
};

/// Rolls out through the intermediate and then the target domains, unlabeled.
SplitMetrics evaluate_rollout(const ModelParams& params, const StreamSplit& split,
                              const AblationSpec& ablation = {});
SplitMetrics evaluate_erm(const ErmParams& params, const StreamSplit& split);

/// Seed-level and seed-averaged target metrics of one ablation variant.
struct AblationResult {
  AblationSpec spec;
  std::vector<std::uint64_t> seeds;
  std::vector<Metrics> per_seed;
  double mean = 0.0;
  double stddev = 0.0;
};

/// Trains on the split's source with each seed and scores target rollouts.
AblationResult run_ablation(const StreamSplit& split, const TrainConfig& base_config,
                            const AblationSpec& spec,
                            std::span<const std::uint64_t> seeds);

struct BoundaryRow {
  int t = 0;
  double x0 = 0.0;
  double x1 = 0.0;
  int pred = 0;
  double score = 0.0;  // probability of the predicted class
};

/// Logits for grid points `X` (m x 2) at domain `t`.
using DomainPredictFn = std::function<Tensor(int t, const Tensor& X)>;

/// Evaluates `predict` on a resolution x resolution grid for every domain in
/// `domains`; rows are ordered by domain, then x1, then x0.
std::vector<BoundaryRow> export_decision_boundary(const DomainPredictFn& predict,
                                                  std::span<const int> domains,
                                                  std::array<double, 2> x_limits,
                                                  std::array<double, 2> y_limits,
                                                  std::size_t resolution);

std::string boundary_csv(std::span<const BoundaryRow> rows);

/// Predicts any domain of a stream: replayed latents for source indices,
/// rolled-out latents for later ones.
class BoundaryPredictor {
 public:
  BoundaryPredictor(const ModelParams& params, const DomainStream& source,
                    std::span<const UnlabeledDomain> later);
  Tensor operator()(int t, const Tensor& X) const;
  std::vector<int> domains() const;

 private:
  ModelParams params_;
  std::map<int, DomainLatents> latents_;
};

/// Detached copy with no gradient tracking, for inference.
ModelParams frozen(const ModelParams& params);

}  // namespace mists
