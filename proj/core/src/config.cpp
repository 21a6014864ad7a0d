#include "mists/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <type_traits>

namespace mists {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError("config key '" + key + "': expected true or false, got '" + text + "'");
  } else {
    T value{};
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end || text.empty()) {
      throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
    }
    return value;
  }
}

struct Field {
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
Field field(T TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string& key, const std::string& text) {
            c.*member = parse_number<T>(key, text);
          },
          [member](const TrainConfig& c) {
            if constexpr (std::is_same_v<T, bool>) {
              return std::string(c.*member ? "true" : "false");
            } else if constexpr (std::is_floating_point_v<T>) {
              return format_double(c.*member);
            } else {
              return std::to_string(c.*member);
            }
          }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"d_zc", field(&TrainConfig::d_zc)},
      {"d_zt", field(&TrainConfig::d_zt)},
      {"hidden", field(&TrainConfig::hidden)},
      {"K", field(&TrainConfig::K)},
      {"alpha", field(&TrainConfig::alpha)},
      {"beta", field(&TrainConfig::beta)},
      {"lambda", field(&TrainConfig::lambda)},
      {"lr", field(&TrainConfig::lr)},
      {"adam_beta1", field(&TrainConfig::adam_beta1)},
      {"adam_beta2", field(&TrainConfig::adam_beta2)},
      {"adam_eps", field(&TrainConfig::adam_eps)},
      {"epochs", field(&TrainConfig::epochs)},
      {"batch_size", field(&TrainConfig::batch_size)},
      {"temperature", field(&TrainConfig::temperature)},
      {"seed", field(&TrainConfig::seed)},
      {"logvar_clamp", field(&TrainConfig::logvar_clamp)},
      {"grad_clip", field(&TrainConfig::grad_clip)},
      {"mi_memory", field(&TrainConfig::mi_memory)},
      {"standardize_inputs", field(&TrainConfig::standardize_inputs)},
      {"classify_with_means", field(&TrainConfig::classify_with_means)},
  };
  return table;
}

const Field& lookup(const std::string& key) {
  for (const auto& [name, f] : fields()) {
    if (name == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

void TrainConfig::validate() const {
  require(d_zc >= 1 && d_zt >= 1, "latent sizes must be positive");
  require(hidden >= 1, "hidden must be positive");
  require(K >= 1, "K must be positive");
  require(alpha >= 0.0 && beta >= 0.0 && lambda >= 0.0,
          "loss coefficients must be non-negative");
  require(lr > 0.0 && std::isfinite(lr), "lr must be positive");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1 must lie in [0, 1)");
  require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2 must lie in [0, 1)");
  require(adam_eps > 0.0, "adam_eps must be positive");
  require(batch_size >= 2, "batch_size must be at least 2");
  require(temperature > 0.0, "temperature must be positive");
  require(logvar_clamp > 0.0, "logvar_clamp must be positive");
  require(grad_clip > 0.0, "grad_clip must be positive");
}

void AblationSpec::validate() const {
  if (!use_zc && !use_zt) {
    throw ConfigError("ablation must keep at least one of z_c and z_t");
  }
}

AblationSpec AblationSpec::variant(const std::string& name) {
  if (name == "full") return {};
  if (name == "A") return {true, false, true, true};
  if (name == "B") return {false, true, true, true};
  if (name == "C") return {true, false, true, false};
  if (name == "D") return {false, true, true, false};
  if (name == "E") return {true, true, false, true};
  throw ConfigError("unknown ablation variant '" + name +
                    "' (expected full, A, B, C, D or E)");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& entry : fields()) out.push_back(entry.first);
    return out;
  }();
  return keys;
}

void set_config_value(TrainConfig& config, const std::string& key,
                      const std::string& value) {
  lookup(key).set(config, key, value);
}

std::string get_config_value(const TrainConfig& config, const std::string& key) {
  return lookup(key).get(config);
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (auto [it, fresh] = seen.emplace(key, line_no); !fresh) {
      throw ConfigError("config line " + std::to_string(line_no) + ": key '" + key +
                        "' repeats line " + std::to_string(it->second));
    }
    set_config_value(config, key, value);
  }
  config.validate();
  return config;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string format_config(const TrainConfig& config) {
  std::string out;
  for (const auto& [name, f] : fields()) out += name + " = " + f.get(config) + "\n";
  return out;
}

}  // namespace mists
