#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mists/tensor.hpp"

namespace mists {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Malformed or inconsistent dataset input (carries a line number when known).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Domain {
  int index = 1;
  Matrix X;
  std::vector<int> y;

  std::size_t size() const { return y.size(); }
  bool operator==(const Domain& other) const {
    return index == other.index && y == other.y && X.rows() == other.X.rows() &&
           X.cols() == other.X.cols() && X == other.X;
  }
};

/// A domain with its labels removed, for inference paths that must not see them.
struct UnlabeledDomain {
  int index = 1;
  Matrix X;
};

struct DomainStream {
  std::vector<Domain> domains;
  std::size_t feature_dim = 0;
  std::size_t n_classes = 2;
  std::string name;

  std::size_t size() const { return domains.size(); }
  /// Checks consecutive indices, shared dimensions, finite rows, label range.
  void validate() const;
  bool same_data(const DomainStream& other) const {
    return feature_dim == other.feature_dim && n_classes == other.n_classes &&
           domains == other.domains;
  }
};

std::vector<UnlabeledDomain> strip_labels(const DomainStream& stream);

/// Linear-Gaussian latent model: z_c ~ N(y mu_c, sigma_c^2 I),
/// z_t ~ N(y mu_t, sigma_t^2 I), mu_{t+1} = A mu_t + b, x = mix [z_c; z_t].
struct ScmParams {
  Eigen::VectorXd mu_c;
  double sigma_c = 1.0;
  Eigen::VectorXd mu_t_init;
  Eigen::MatrixXd drift_matrix;
  Eigen::VectorXd drift_offset;
  double sigma_t = 1.0;
  Eigen::MatrixXd mix;

  std::size_t invariant_dim() const { return static_cast<std::size_t>(mu_c.size()); }
  std::size_t dynamic_dim() const { return static_cast<std::size_t>(mu_t_init.size()); }
  void validate() const;

  /// One invariant and one dynamic coordinate, identity mix, no drift.
  static ScmParams scalar(double mu_c, double sigma_c, double mu_t, double sigma_t);

  /// Scalar latents, mu_c = 1, dynamic mean -1.5 + 0.25 (t - 1), mix rotated
  /// by 30 degrees. The dynamic sign flips inside the source range.
  static ScmParams drifting();
};

/// Dynamic mean at domain t (1-based): the drift map applied t - 1 times.
Eigen::VectorXd scm_dynamic_mean(const ScmParams& params, int t);

DomainStream generate_circle(int n_domains, int n_per_domain, bool concept_shift,
                             std::uint64_t seed);
DomainStream generate_sine(int n_domains, int n_per_domain,
                           std::optional<int> flip_from, std::uint64_t seed);
DomainStream generate_scm(const ScmParams& params, int n_domains,
                          int n_per_domain, std::uint64_t seed);

struct StreamSplit {
  DomainStream source;
  DomainStream intermediate;
  DomainStream target;
};

inline constexpr std::array<double, 3> kDefaultSplit = {1.0 / 2.0, 1.0 / 6.0,
                                                        1.0 / 3.0};

/// Contiguous split; the first two counts are round(T * r), the rest is target.
StreamSplit split_stream(const DomainStream& stream,
                         const std::array<double, 3>& ratios = kDefaultSplit);

/// Concatenates streams whose indices continue one another.
DomainStream join_streams(const DomainStream& first, const DomainStream& second);

void save_stream(const DomainStream& stream, const std::filesystem::path& path);
DomainStream load_stream(const std::filesystem::path& path);

/// Row-major copy of a data matrix as a constant tensor.
Tensor to_tensor(const Matrix& m);

}  // namespace mists
