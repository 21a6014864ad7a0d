#include "mists_cli/manifest.hpp"

#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#ifndef MISTS_VERSION
#define MISTS_VERSION "unknown"
#endif

namespace mists::cli {

RunManifest::RunManifest(std::string command, std::vector<std::string> argv)
    : command_(std::move(command)),
      argv_(std::move(argv)),
      start_(std::chrono::steady_clock::now()) {}

void RunManifest::set_dataset(std::string name, std::map<std::string, std::string> args) {
  dataset_ = std::move(name);
  dataset_args_ = std::move(args);
}

std::string RunManifest::to_json(std::optional<double> wall_seconds) const {
  nlohmann::ordered_json j;
  j["command"] = command_;
  j["argv"] = argv_;
  j["version"] = MISTS_VERSION;
  if (config_) {
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    for (const std::string& key : config_keys()) cfg[key] = get_config_value(*config_, key);
    j["config"] = cfg;
  }
  j["seeds"] = seeds_;
  if (!dataset_.empty()) {
    j["dataset"] = {{"name", dataset_}, {"args", dataset_args_}};
  }
  j["outputs"] = outputs_;
  j["status"] = wall_seconds ? "complete" : "running";
  j["wall_seconds"] = wall_seconds ? nlohmann::ordered_json(*wall_seconds) : nlohmann::ordered_json();
  return j.dump(2) + "\n";
}

void RunManifest::write(const std::filesystem::path& path) {
  path_ = path;
  std::ofstream out(path_);
  if (!out) throw std::invalid_argument("cannot write manifest '" + path_.string() + "'");
  out << to_json(std::nullopt);
}

void RunManifest::finish() {
  if (path_.empty()) return;
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start_;
  std::ofstream out(path_);
  if (!out) throw std::invalid_argument("cannot write manifest '" + path_.string() + "'");
  out << to_json(elapsed.count());
}

std::filesystem::path manifest_path_for(const std::filesystem::path& result) {
  std::filesystem::path p = result;
  p += ".manifest.json";
  return p;
}

}  // namespace mists::cli
