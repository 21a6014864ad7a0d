#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mists/config.hpp"

namespace mists::cli {

/// Provenance record written next to every result. `write()` is called once
/// before any result exists and again by `finish()` with the wall time.
class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> argv);

  void set_config(const TrainConfig& config) { config_ = config; }
  void add_seed(std::uint64_t seed) { seeds_.push_back(seed); }
  void set_dataset(std::string name, std::map<std::string, std::string> args);
  void add_output(const std::filesystem::path& path) { outputs_.push_back(path.string()); }

  void write(const std::filesystem::path& path);
  void finish();
  std::string to_json(std::optional<double> wall_seconds) const;

  const std::filesystem::path& path() const { return path_; }
  /// Name of the manifest file, as referenced from sibling results.
  std::string reference() const { return path_.filename().string(); }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  std::optional<TrainConfig> config_;
  std::vector<std::uint64_t> seeds_;
  std::string dataset_;
  std::map<std::string, std::string> dataset_args_;
  std::vector<std::string> outputs_;
  std::filesystem::path path_;
  std::chrono::steady_clock::time_point start_;
};

/// `<out>.manifest.json` for a single result file.
std::filesystem::path manifest_path_for(const std::filesystem::path& result);

}  // namespace mists::cli
