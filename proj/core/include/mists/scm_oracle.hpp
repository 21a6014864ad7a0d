#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "mists/datagen.hpp"

namespace mists {

/// Linear score w^T [z_c; z_t] + b; positive scores predict y = +1.
struct LinearClassifier {
  Eigen::VectorXd weights;
  double bias = 0.0;
};

enum class RiskLoss { kZeroOne, kLogistic };

/// Standard normal CDF.
double normal_cdf(double x);

/// Uses only the invariant block: [2 mu_c / sigma_c^2; 0].
LinearClassifier invariant_optimal_classifier(const ScmParams& params);

/// Log-odds classifier at domain t: [2 mu_c / sigma_c^2; 2 mu_t(t) / sigma_t^2].
LinearClassifier bayes_classifier(const ScmParams& params, int t);

/// Closed-form zero-one risks for the uniform-sigma SCM.
double invariant_risk_closed_form(const ScmParams& params);
double bayes_risk_closed_form(const ScmParams& params, int t);

struct RiskEstimate {
  double risk = 0.0;
  double stderr_ = 0.0;
};

/// Mean loss over n fresh latent samples of domain t (n >= 10^4).
/// A score of exactly zero counts as half an error.
RiskEstimate monte_carlo_risk_detailed(const LinearClassifier& clf,
                                       const ScmParams& params, int t, long n,
                                       RiskLoss loss, std::uint64_t seed);
double monte_carlo_risk(const LinearClassifier& clf, const ScmParams& params,
                        int t, long n, RiskLoss loss, std::uint64_t seed);

struct TheoremReport {
  double risk_invariant = 0.0;
  double risk_bayes = 0.0;
  double gap = 0.0;
  /// Standard error of the paired per-sample loss difference.
  double stderr_ = 0.0;
  bool success = false;
  std::string note;
};

/// Both risks are measured on the same samples; success iff gap > 3 stderr.
TheoremReport verify_theorem1(const ScmParams& params, int t, long n,
                              std::uint64_t seed);

}  // namespace mists
