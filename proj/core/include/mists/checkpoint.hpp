#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "mists/baselines.hpp"
#include "mists/config.hpp"
#include "mists/model.hpp"

namespace mists {

/// Unreadable checkpoint, or one whose tensors disagree with its config echo.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Text checkpoint: a header, the training config echo, then every named
/// tensor with its shape and values at 17 significant digits.
///
///   mists-checkpoint 1
///   kind mists
///   dims input_dim=2 n_classes=2
///   ablation use_zc=1 use_zt=1 use_wt=1 use_mi=1
///   config d_zc = 8
///   ...
///   tensor theta.W 2 32
///   <values>
///   end
struct Checkpoint {
  TrainConfig config;
  AblationSpec ablation;
  std::optional<ModelParams> mists;
  std::optional<ErmParams> erm;
};

std::string format_checkpoint(const ModelParams& params, const TrainConfig& config,
                              const AblationSpec& ablation = {});
std::string format_checkpoint(const ErmParams& params, const TrainConfig& config);
Checkpoint parse_checkpoint(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const TrainConfig& config, const AblationSpec& ablation = {});
void save_checkpoint(const std::filesystem::path& path, const ErmParams& params,
                     const TrainConfig& config);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mists
