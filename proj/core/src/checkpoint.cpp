#include "mists/checkpoint.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace mists {

namespace {

constexpr const char* kMagic = "mists-checkpoint 1";

template <typename Named>
std::string format(const char* kind, const std::string& dims, const Named& named,
                   const TrainConfig& config, const AblationSpec& ablation) {
  std::string out = std::string(kMagic) + "\nkind " + kind + "\ndims " + dims + "\n";
  out += "ablation use_zc=" + std::to_string(ablation.use_zc) +
         " use_zt=" + std::to_string(ablation.use_zt) +
         " use_wt=" + std::to_string(ablation.use_wt) +
         " use_mi=" + std::to_string(ablation.use_mi) + "\n";
  std::istringstream cfg(format_config(config));
  for (std::string line; std::getline(cfg, line);) out += "config " + line + "\n";
  char buf[64];
  for (const auto& [name, t] : named) {
    out += "tensor " + name;
    for (std::size_t extent : t->shape()) out += " " + std::to_string(extent);
    out += "\n";
    const auto values = t->values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", values[i]);
      out += (i ? " " : "");
      out += buf;
    }
    out += "\n";
  }
  return out + "end\n";
}

class Reader {
 public:
  explicit Reader(const std::string& text) : in_(text) {}

  std::string next(const char* expecting) {
    std::string line;
    if (pending_) {
      line = std::move(*pending_);
      pending_.reset();
      return line;
    }
    if (!std::getline(in_, line)) {
      throw CheckpointError("checkpoint truncated: expected " + std::string(expecting));
    }
    ++line_;
    return line;
  }

  void unget(std::string line) { pending_ = std::move(line); }

  [[noreturn]] void fail(const std::string& what) const {
    throw CheckpointError("checkpoint line " + std::to_string(line_) + ": " + what);
  }

 private:
  std::istringstream in_;
  std::size_t line_ = 0;
  std::optional<std::string> pending_;
};

std::size_t parse_size(Reader& r, const std::string& text) {
  std::size_t v = 0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) r.fail("bad integer '" + text + "'");
  return v;
}

std::map<std::string, std::size_t> parse_pairs(Reader& r, const std::string& line,
                                               const std::string& tag) {
  if (line.rfind(tag + " ", 0) != 0) r.fail("expected '" + tag + "'");
  std::map<std::string, std::size_t> out;
  std::istringstream in(line.substr(tag.size() + 1));
  for (std::string item; in >> item;) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) r.fail("bad " + tag + " entry '" + item + "'");
    out[item.substr(0, eq)] = parse_size(r, item.substr(eq + 1));
  }
  return out;
}

std::size_t field(Reader& r, const std::map<std::string, std::size_t>& pairs,
                  const std::string& tag, const std::string& key) {
  const auto it = pairs.find(key);
  if (it == pairs.end()) r.fail(tag + " lacks '" + key + "'");
  return it->second;
}

bool flag(Reader& r, const std::map<std::string, std::size_t>& pairs, const std::string& key) {
  const std::size_t v = field(r, pairs, "ablation", key);
  if (v > 1) r.fail("ablation flag '" + key + "' must be 0 or 1");
  return v == 1;
}

template <typename Named>
void read_tensors(Reader& r, Named named) {
  for (auto& [name, t] : named) {
    const std::string header = r.next("tensor header");
    std::istringstream in(header);
    std::string tag, got_name;
    in >> tag >> got_name;
    if (tag != "tensor") r.fail("expected 'tensor', got '" + tag + "'");
    if (got_name != name) r.fail("expected tensor '" + name + "', got '" + got_name + "'");
    Shape shape;
    for (std::string extent; in >> extent;) shape.push_back(parse_size(r, extent));
    if (shape != t->shape()) {
      r.fail("tensor '" + name + "' has shape " + shape_string(shape) +
             " but the config echo implies " + shape_string(t->shape()));
    }
    const std::string body = r.next("tensor values");
    std::vector<double> values;
    values.reserve(t->numel());
    const char* p = body.data();
    const char* end = body.data() + body.size();
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      double v = 0.0;
      const auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc()) r.fail("bad value in tensor '" + name + "'");
      values.push_back(v);
      p = next;
    }
    if (values.size() != t->numel()) {
      r.fail("tensor '" + name + "' has " + std::to_string(values.size()) +
             " values, expected " + std::to_string(t->numel()));
    }
    const bool grad = t->requires_grad();
    *t = Tensor(shape, std::move(values));
    if (grad) t->set_requires_grad();
  }
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw CheckpointError("write to '" + path.string() + "' failed");
}

}  // namespace

std::string format_checkpoint(const ModelParams& params, const TrainConfig& config,
                              const AblationSpec& ablation) {
  const ModelDims& d = params.dims;
  const std::string dims = "input_dim=" + std::to_string(d.input_dim) +
                           " n_classes=" + std::to_string(d.n_classes);
  return format("mists", dims, params.named(), config, ablation);
}

std::string format_checkpoint(const ErmParams& params, const TrainConfig& config) {
  const std::string dims = "input_dim=" + std::to_string(params.input_dim) +
                           " n_classes=" + std::to_string(params.n_classes);
  return format("erm", dims, params.named(), config, AblationSpec{});
}

Checkpoint parse_checkpoint(const std::string& text) {
  Reader r(text);
  if (r.next("magic") != kMagic) r.fail("not a checkpoint (expected '" + std::string(kMagic) + "')");
  const std::string kind_line = r.next("kind");
  if (kind_line.rfind("kind ", 0) != 0) r.fail("expected 'kind'");
  const std::string kind = kind_line.substr(5);
  const auto dims = parse_pairs(r, r.next("dims"), "dims");
  const auto flags = parse_pairs(r, r.next("ablation"), "ablation");

  Checkpoint cp;
  cp.ablation = {flag(r, flags, "use_zc"), flag(r, flags, "use_zt"), flag(r, flags, "use_wt"),
                 flag(r, flags, "use_mi")};
  try {
    cp.ablation.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }
  std::string config_text;
  std::string line = r.next("config");
  while (line.rfind("config ", 0) == 0) {
    config_text += line.substr(7) + "\n";
    line = r.next("tensor");
  }
  try {
    cp.config = parse_config(config_text);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config echo: ") + e.what());
  }

  r.unget(line);
  const std::size_t d = field(r, dims, "dims", "input_dim");
  const std::size_t c = field(r, dims, "dims", "n_classes");
  try {
    if (kind == "mists") {
      ModelParams p = init_params(ModelDims::from_config(cp.config, d, c), 0);
      read_tensors(r, p.named());
      cp.mists = std::move(p);
    } else if (kind == "erm") {
      ErmParams p = init_erm_params(d, c, cp.config.hidden, 0);
      read_tensors(r, p.named());
      cp.erm = std::move(p);
    } else {
      r.fail("unknown model kind '" + kind + "'");
    }
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  if (r.next("end") != "end") r.fail("expected 'end'");
  return cp;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const TrainConfig& config, const AblationSpec& ablation) {
  write_file(path, format_checkpoint(params, config, ablation));
}

void save_checkpoint(const std::filesystem::path& path, const ErmParams& params,
                     const TrainConfig& config) {
  write_file(path, format_checkpoint(params, config));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_checkpoint(buffer.str());
}

}  // namespace mists
