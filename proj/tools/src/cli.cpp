#include "mists_cli/cli.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#if __has_include(<CLI/CLI.hpp>)
#include <CLI/CLI.hpp>
#else
#include <CLI11.hpp>
#endif
#include <nlohmann/json.hpp>

#include "mists/baselines.hpp"
#include "mists/checkpoint.hpp"
#include "mists/config.hpp"
#include "mists/datagen.hpp"
#include "mists/eval.hpp"
#include "mists/grad_check.hpp"
#include "mists/objectives.hpp"
#include "mists/rng.hpp"
#include "mists/scm_oracle.hpp"
#include "mists/training.hpp"
#include "mists_cli/manifest.hpp"

namespace mists::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  std::vector<std::string> argv;
};

struct GenOptions {
  std::string dataset;
  std::optional<int> domains;
  int n = 200;
  std::string out;
};

struct TrainOptions {
  std::string data;
  std::string config;
  std::string out;
  std::string model = "mists";
  std::string variant = "full";
  std::string split = "1/2,1/6,1/3";
};

struct EvalOptions {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::string split = "1/2,1/6,1/3";
};

struct AblateOptions {
  std::string data;
  std::string config;
  std::string variants = "full,A,B,C,D,E";
  std::string seeds = "0,1,2";
  std::string out;
  std::string split = "1/2,1/6,1/3";
};

struct GradcheckOptions {
  double eps = 1e-5;
  double tolerance = 1e-5;
  std::string out;
};

struct TheoryOptions {
  double mu_c = 1.0;
  double sigma_c = 1.0;
  double mu_t = 1.0;
  double sigma_t = 1.0;
  long n = 1000000;
  int t = 1;
  int identity_instances = 100;
  std::string out;
};

struct BoundaryOptions {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::size_t resolution = 100;
  std::string split = "1/2,1/6,1/3";
  std::string xlim;
  std::string ylim;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) out.push_back(item);
  return out;
}

double parse_number(const std::string& text, const std::string& what) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw UsageError("bad " + what + " '" + text + "'");
  }
  return v;
}

/// A ratio is a decimal or a fraction such as 1/6.
double parse_ratio(const std::string& text) {
  const auto slash = text.find('/');
  if (slash == std::string::npos) return parse_number(text, "split ratio");
  const double num = parse_number(text.substr(0, slash), "split ratio");
  const double den = parse_number(text.substr(slash + 1), "split ratio");
  if (den == 0.0) throw UsageError("split ratio '" + text + "' divides by zero");
  return num / den;
}

std::array<double, 3> parse_split(const std::string& text) {
  const auto parts = split_list(text);
  if (parts.size() != 3) {
    throw UsageError("--split needs three ratios (source,intermediate,target), got '" +
                     text + "'");
  }
  return {parse_ratio(parts[0]), parse_ratio(parts[1]), parse_ratio(parts[2])};
}

std::array<double, 2> parse_limits(const std::string& text, const char* flag) {
  const auto parts = split_list(text);
  if (parts.size() != 2) throw UsageError(std::string(flag) + " needs lo,hi");
  const std::array<double, 2> lim = {parse_number(parts[0], flag), parse_number(parts[1], flag)};
  if (!(lim[0] < lim[1])) throw UsageError(std::string(flag) + " needs lo < hi");
  return lim;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const std::string& item : split_list(text)) {
    std::uint64_t s = 0;
    const char* end = item.data() + item.size();
    const auto [ptr, ec] = std::from_chars(item.data(), end, s);
    if (item.empty() || ec != std::errc() || ptr != end) {
      throw UsageError("bad seed '" + item + "'");
    }
    seeds.push_back(s);
  }
  if (seeds.empty()) throw UsageError("--seeds is empty");
  return seeds;
}

TrainConfig load_train_config(const std::string& path, const Globals& g) {
  TrainConfig config = path.empty() ? TrainConfig{} : load_config(path);
  if (g.seed) config.seed = *g.seed;
  config.validate();
  return config;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw UsageError("write to '" + path.string() + "' failed");
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

json metrics_json(const Metrics& m) { return json::parse(m.to_json()); }

// ---------------------------------------------------------------------------

int cmd_gen(const GenOptions& o, const Globals& g, std::ostream& out) {
  const std::uint64_t seed = g.seed.value_or(0);
  const bool circle = o.dataset == "circle" || o.dataset == "circle-c";
  const int domains = o.domains.value_or(circle ? 30 : 24);

  RunManifest manifest("gen", g.argv);
  manifest.add_seed(seed);
  manifest.set_dataset(o.dataset, {{"domains", std::to_string(domains)},
                                   {"n", std::to_string(o.n)}});
  manifest.add_output(o.out);
  ensure_parent(o.out);
  manifest.write(manifest_path_for(o.out));

  DomainStream stream;
  if (circle) {
    stream = generate_circle(domains, o.n, o.dataset == "circle-c", seed);
  } else if (o.dataset == "sine") {
    stream = generate_sine(domains, o.n, std::nullopt, seed);
  } else if (o.dataset == "sine-c") {
    stream = generate_sine(domains, o.n, 6, seed);
  } else {
    stream = generate_scm(ScmParams::drifting(), domains, o.n, seed);
  }
  save_stream(stream, o.out);
  manifest.finish();
  if (!g.quiet) {
    out << "wrote " << stream.size() << " domains of " << o.dataset << " to " << o.out << "\n";
  }
  return kExitOk;
}

int cmd_train(const TrainOptions& o, const Globals& g, std::ostream& out, std::ostream& err) {
  const TrainConfig config = load_train_config(o.config, g);
  const AblationSpec ablation = AblationSpec::variant(o.variant);
  if (o.model != "mists" && o.model != "erm") throw UsageError("unknown model '" + o.model + "'");
  const DomainStream stream = load_stream(o.data);
  const StreamSplit split = split_stream(stream, parse_split(o.split));

  const fs::path dir = o.out;
  fs::create_directories(dir);
  RunManifest manifest("train", g.argv);
  manifest.set_config(config);
  manifest.add_seed(config.seed);
  manifest.set_dataset(o.data, {{"split", o.split}, {"model", o.model}, {"variant", o.variant}});
  manifest.add_output(dir / "checkpoint.txt");
  if (o.model == "mists") manifest.add_output(dir / "history.csv");
  manifest.write(dir / "manifest.json");

  if (o.model == "erm") {
    const ErmParams params = train_erm_baseline(split.source, config);
    save_checkpoint(dir / "checkpoint.txt", params, config);
  } else {
    EpochObserver observer;
    if (!g.quiet) {
      observer = [&err, &config](std::size_t epoch, const LossBreakdown& b) {
        if ((epoch + 1) % 25 == 0 || epoch == 0 || epoch + 1 == config.epochs) {
          err << "epoch " << epoch + 1 << "/" << config.epochs << " total " << b.total << "\n";
        }
      };
    }
    const TrainResult result = train(split.source, config, ablation, observer);
    save_checkpoint(dir / "checkpoint.txt", result.params, config, ablation);
    result.history.save_csv(dir / "history.csv");
  }
  manifest.finish();
  if (!g.quiet) out << "wrote " << (dir / "checkpoint.txt").string() << "\n";
  return kExitOk;
}

int cmd_eval(const EvalOptions& o, const Globals& g, std::ostream& out) {
  const Checkpoint cp = load_checkpoint(o.checkpoint);
  const DomainStream stream = load_stream(o.data);
  const StreamSplit split = split_stream(stream, parse_split(o.split));

  RunManifest manifest("eval", g.argv);
  manifest.set_config(cp.config);
  manifest.add_seed(cp.config.seed);
  manifest.set_dataset(o.data, {{"split", o.split}, {"checkpoint", o.checkpoint}});
  manifest.add_output(o.out);
  ensure_parent(o.out);
  manifest.write(manifest_path_for(o.out));

  const SplitMetrics m = cp.mists ? evaluate_rollout(*cp.mists, split, cp.ablation)
                                  : evaluate_erm(*cp.erm, split);
  json j = metrics_json(m.target);
  j["validation"] = metrics_json(m.validation);
  j["model"] = cp.mists ? "mists" : "erm";
  j["protocol"] = "batch";
  j["manifest"] = manifest.reference();
  write_text(o.out, j.dump(2) + "\n");
  manifest.finish();
  if (!g.quiet) out << "target average " << m.target.average << "\n";
  return kExitOk;
}

int cmd_ablate(const AblateOptions& o, const Globals& g, std::ostream& out, std::ostream& err) {
  const TrainConfig config = load_train_config(o.config, g);
  std::vector<std::pair<std::string, AblationSpec>> variants;
  for (const std::string& name : split_list(o.variants)) {
    try {
      variants.emplace_back(name, AblationSpec::variant(name));
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
  }
  if (variants.empty()) throw UsageError("--variants is empty");
  const auto seeds = parse_seeds(o.seeds);
  const DomainStream stream = load_stream(o.data);
  const StreamSplit split = split_stream(stream, parse_split(o.split));

  RunManifest manifest("ablate", g.argv);
  manifest.set_config(config);
  for (std::uint64_t s : seeds) manifest.add_seed(s);
  manifest.set_dataset(o.data, {{"split", o.split}, {"variants", o.variants}});
  manifest.add_output(o.out);
  ensure_parent(o.out);
  manifest.write(manifest_path_for(o.out));

  std::string csv = "variant,mean,std";
  for (std::uint64_t s : seeds) csv += ",seed_" + std::to_string(s);
  csv += "\n";
  char buf[64];
  for (const auto& [name, spec] : variants) {
    if (!g.quiet) err << "variant " << name << "\n";
    const AblationResult r = run_ablation(split, config, spec, seeds);
    csv += name;
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f", r.mean, r.stddev);
    csv += buf;
    for (const Metrics& m : r.per_seed) {
      std::snprintf(buf, sizeof buf, ",%.6f", m.average);
      csv += buf;
    }
    csv += "\n";
  }
  write_text(o.out, csv);
  manifest.finish();
  if (!g.quiet) out << csv;
  return kExitOk;
}

int emit_report(const json& report, const std::string& out_path, RunManifest& manifest,
                std::ostream& out) {
  if (out_path.empty()) {
    json j = report;
    j["manifest"] = json::parse(manifest.to_json(std::nullopt));
    out << j.dump(2) << "\n";
    return kExitOk;
  }
  json j = report;
  j["manifest"] = manifest.reference();
  write_text(out_path, j.dump(2) + "\n");
  manifest.finish();
  return kExitOk;
}

int cmd_gradcheck(const GradcheckOptions& o, const Globals& g, std::ostream& out) {
  RunManifest manifest("gradcheck", g.argv);
  const std::uint64_t seed = g.seed.value_or(0);
  manifest.add_seed(seed);
  if (!o.out.empty()) {
    manifest.add_output(o.out);
    ensure_parent(o.out);
    manifest.write(manifest_path_for(o.out));
  }
  json report;
  report["eps"] = o.eps;
  report["tolerance"] = o.tolerance;
  json rows = json::array();
  bool ok = true;
  double worst = 0.0;
  for (const PrimitiveCheck& c : check_all_primitives(o.eps, seed)) {
    const double e = c.result.max_relative_error;
    ok = ok && e < o.tolerance;
    worst = std::max(worst, e);
    rows.push_back({{"primitive", c.name}, {"max_relative_error", e}, {"pass", e < o.tolerance}});
  }
  report["primitives"] = rows;
  report["max_relative_error"] = worst;
  report["success"] = ok;
  emit_report(report, o.out, manifest, out);
  return ok ? kExitOk : kExitNumerical;
}

/// Largest identity residual over random joint/prior pairs on small alphabets.
double identity_residual(int instances, std::uint64_t seed) {
  Engine engine = make_engine(seed, "identity");
  std::uniform_int_distribution<int> size(2, 8);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  double worst = 0.0;
  for (int k = 0; k < instances; ++k) {
    const int nx = size(engine), nz = size(engine);
    std::vector<std::vector<double>> joint(static_cast<std::size_t>(nx),
                                           std::vector<double>(static_cast<std::size_t>(nz)));
    std::vector<double> prior(static_cast<std::size_t>(nz));
    double total = 0.0, prior_total = 0.0;
    for (auto& row : joint) {
      for (double& v : row) total += (v = u(engine));
    }
    for (double& v : prior) prior_total += (v = u(engine));
    for (auto& row : joint) {
      for (double& v : row) v /= total;
    }
    for (double& v : prior) v /= prior_total;
    worst = std::max(worst, kl_mi_identity_residual(joint, prior));
  }
  return worst;
}

int cmd_theory(const TheoryOptions& o, const Globals& g, std::ostream& out) {
  RunManifest manifest("theory-check", g.argv);
  const std::uint64_t seed = g.seed.value_or(0);
  manifest.add_seed(seed);
  manifest.set_dataset("scm", {{"mu_c", std::to_string(o.mu_c)},
                               {"sigma_c", std::to_string(o.sigma_c)},
                               {"mu_t", std::to_string(o.mu_t)},
                               {"sigma_t", std::to_string(o.sigma_t)},
                               {"n", std::to_string(o.n)},
                               {"t", std::to_string(o.t)}});
  if (!o.out.empty()) {
    manifest.add_output(o.out);
    ensure_parent(o.out);
    manifest.write(manifest_path_for(o.out));
  }
  const ScmParams params = ScmParams::scalar(o.mu_c, o.sigma_c, o.mu_t, o.sigma_t);
  const TheoremReport r = verify_theorem1(params, o.t, o.n, seed);
  json report;
  report["risk_invariant"] = r.risk_invariant;
  report["risk_bayes"] = r.risk_bayes;
  report["gap"] = r.gap;
  report["stderr"] = r.stderr_;
  report["gap_closed_form"] =
      invariant_risk_closed_form(params) - bayes_risk_closed_form(params, o.t);
  report["success"] = r.success;
  report["note"] = r.note;
  report["identity_instances"] = o.identity_instances;
  report["identity_residual_max"] = identity_residual(o.identity_instances, seed);
  return emit_report(report, o.out, manifest, out);
}

std::array<double, 2> padded_extent(const DomainStream& s, Eigen::Index col) {
  double lo = INFINITY, hi = -INFINITY;
  for (const Domain& d : s.domains) {
    lo = std::min(lo, d.X.col(col).minCoeff());
    hi = std::max(hi, d.X.col(col).maxCoeff());
  }
  const double pad = 0.05 * std::max(hi - lo, 1e-6);
  return {lo - pad, hi + pad};
}

int cmd_boundary(const BoundaryOptions& o, const Globals& g, std::ostream& out) {
  if (o.resolution < 2) throw UsageError("--resolution must be >= 2");
  const Checkpoint cp = load_checkpoint(o.checkpoint);
  const DomainStream stream = load_stream(o.data);
  if (stream.feature_dim != 2) {
    throw UsageError("decision boundaries need 2-D features, '" + o.data + "' has " +
                     std::to_string(stream.feature_dim));
  }
  const StreamSplit split = split_stream(stream, parse_split(o.split));
  const auto xlim = o.xlim.empty() ? padded_extent(stream, 0) : parse_limits(o.xlim, "--xlim");
  const auto ylim = o.ylim.empty() ? padded_extent(stream, 1) : parse_limits(o.ylim, "--ylim");

  RunManifest manifest("plot-boundary", g.argv);
  manifest.set_config(cp.config);
  manifest.add_seed(cp.config.seed);
  manifest.set_dataset(o.data, {{"split", o.split},
                                {"checkpoint", o.checkpoint},
                                {"resolution", std::to_string(o.resolution)}});
  manifest.add_output(o.out);
  ensure_parent(o.out);
  manifest.write(manifest_path_for(o.out));

  std::vector<int> domains;
  for (const Domain& d : stream.domains) domains.push_back(d.index);
  DomainPredictFn predict;
  if (cp.mists) {
    const auto later = strip_labels(join_streams(split.intermediate, split.target));
    auto predictor = std::make_shared<BoundaryPredictor>(*cp.mists, split.source, later);
    predict = [predictor](int t, const Tensor& X) { return (*predictor)(t, X); };
  } else {
    const ErmParams erm = *cp.erm;
    predict = [erm](int, const Tensor& X) { return predict_erm(erm, X).detach(); };
  }
  const auto rows = export_decision_boundary(predict, domains, xlim, ylim, o.resolution);
  write_text(o.out, boundary_csv(rows));
  manifest.finish();
  if (!g.quiet) out << "wrote " << rows.size() << " rows to " << o.out << "\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Globals g;
  for (int i = 0; i < argc; ++i) g.argv.emplace_back(argv[i]);

  CLI::App app{"Toolkit for evolving domain generalization with invariant and dynamic latents"};
  app.name("mists");
  app.fallthrough();
  app.require_subcommand(1);
  app.add_option("--seed", g.seed, "Seed override for data, initialisation and training");
  app.add_flag("--quiet,-q", g.quiet, "Suppress progress output");

  GenOptions gen_o;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic domain stream as CSV");
  gen->add_option("dataset", gen_o.dataset, "circle | circle-c | sine | sine-c | scm")
      ->required()
      ->check(CLI::IsMember({"circle", "circle-c", "sine", "sine-c", "scm"}));
  gen->add_option("--domains", gen_o.domains, "Number of domains (30 for circle, else 24)");
  gen->add_option("--n", gen_o.n, "Samples per domain")->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_o.out, "Output CSV")->required();

  TrainOptions train_o;
  auto* train_cmd = app.add_subcommand("train", "Train on the source split");
  train_cmd->add_option("--data", train_o.data, "Stream CSV")->required();
  train_cmd->add_option("--config", train_o.config, "key = value config file");
  train_cmd->add_option("--out", train_o.out, "Output directory")->required();
  train_cmd->add_option("--model", train_o.model, "mists | erm")
      ->check(CLI::IsMember({"mists", "erm"}));
  train_cmd->add_option("--variant", train_o.variant, "full or ablation variant A-E");
  train_cmd->add_option("--split", train_o.split, "source,intermediate,target ratios");

  EvalOptions eval_o;
  auto* eval_cmd = app.add_subcommand("eval", "Roll out into held-out domains and score");
  eval_cmd->add_option("--checkpoint", eval_o.checkpoint)->required();
  eval_cmd->add_option("--data", eval_o.data, "Stream CSV")->required();
  eval_cmd->add_option("--out", eval_o.out, "Metrics JSON")->required();
  eval_cmd->add_option("--split", eval_o.split, "source,intermediate,target ratios");

  AblateOptions ablate_o;
  auto* ablate = app.add_subcommand("ablate", "Seed-averaged ablation table");
  ablate->add_option("--data", ablate_o.data, "Stream CSV")->required();
  ablate->add_option("--config", ablate_o.config, "key = value config file");
  ablate->add_option("--variants", ablate_o.variants, "Comma-separated: full,A,B,C,D,E");
  ablate->add_option("--seeds", ablate_o.seeds, "Comma-separated seeds");
  ablate->add_option("--out", ablate_o.out, "Output CSV")->required();
  ablate->add_option("--split", ablate_o.split, "source,intermediate,target ratios");

  GradcheckOptions grad_o;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every primitive");
  gradcheck->add_option("--eps", grad_o.eps, "Central-difference step");
  gradcheck->add_option("--tolerance", grad_o.tolerance, "Maximum relative error");
  gradcheck->add_option("--out", grad_o.out, "Report JSON (stdout if omitted)");

  TheoryOptions theory_o;
  auto* theory = app.add_subcommand(
      "theory-check", "Monte-Carlo risk gap of invariant-only vs Bayes classifiers");
  theory->add_option("--mu-c", theory_o.mu_c);
  theory->add_option("--sigma-c", theory_o.sigma_c);
  theory->add_option("--mu-t", theory_o.mu_t);
  theory->add_option("--sigma-t", theory_o.sigma_t);
  theory->add_option("--n", theory_o.n, "Monte-Carlo samples");
  theory->add_option("--t", theory_o.t, "Domain index");
  theory->add_option("--identity-instances", theory_o.identity_instances);
  theory->add_option("--out", theory_o.out, "Report JSON (stdout if omitted)");

  BoundaryOptions bound_o;
  auto* boundary = app.add_subcommand("plot-boundary", "Decision-boundary grid as CSV");
  boundary->add_option("--checkpoint", bound_o.checkpoint)->required();
  boundary->add_option("--data", bound_o.data, "Stream CSV")->required();
  boundary->add_option("--out", bound_o.out, "Output CSV")->required();
  boundary->add_option("--resolution", bound_o.resolution, "Grid points per axis");
  boundary->add_option("--split", bound_o.split, "source,intermediate,target ratios");
  boundary->add_option("--xlim", bound_o.xlim, "lo,hi (data extent if omitted)");
  boundary->add_option("--ylim", bound_o.ylim, "lo,hi (data extent if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(gen_o, g, out);
    if (train_cmd->parsed()) return cmd_train(train_o, g, out, err);
    if (eval_cmd->parsed()) return cmd_eval(eval_o, g, out);
    if (ablate->parsed()) return cmd_ablate(ablate_o, g, out, err);
    if (gradcheck->parsed()) return cmd_gradcheck(grad_o, g, out);
    if (theory->parsed()) return cmd_theory(theory_o, g, out);
    if (boundary->parsed()) return cmd_boundary(bound_o, g, out);
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n" << e.breakdown().to_json() << "\n";
    return kExitNumerical;
  } catch (const NonFiniteError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace mists::cli
