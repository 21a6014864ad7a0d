#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace mists {

/// Invalid configuration value or unknown key.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TrainConfig {
  std::size_t d_zc = 8;
  std::size_t d_zt = 8;
  std::size_t hidden = 32;
  std::size_t K = 8;
  double alpha = 1.0;
  double beta = 0.1;
  double lambda = 1.0;
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  double logvar_clamp = 8.0;
  double grad_clip = 10.0;
  /// Detached samples kept per earlier domain for the pooled MI estimates.
  std::size_t mi_memory = 8;
  /// Shift and scale inputs by the source mean and standard deviation.
  bool standardize_inputs = false;
  /// Feed the classifier posterior means of z_c and z_t instead of samples.
  bool classify_with_means = true;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Which latents reach the prediction head, and whether MI terms are used.
struct AblationSpec {
  bool use_zc = true;
  bool use_zt = true;
  bool use_wt = true;
  bool use_mi = true;

  void validate() const;
  bool operator==(const AblationSpec&) const = default;

  /// "full" or one of the variant letters A-E.
  static AblationSpec variant(const std::string& name);
};

/// Names of every TrainConfig key, in file order.
const std::vector<std::string>& config_keys();

/// Parses `key = value` lines; `#` starts a comment; unknown keys are rejected.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
std::string format_config(const TrainConfig& config);

/// Sets one key from its textual value.
void set_config_value(TrainConfig& config, const std::string& key,
                      const std::string& value);
std::string get_config_value(const TrainConfig& config, const std::string& key);

}  // namespace mists
