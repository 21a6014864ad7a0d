// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mists/baselines.hpp"
#include "mists/datagen.hpp"
#include "mists/distributions.hpp"
#include "mists/eval.hpp"
#include "mists/grad_check.hpp"
#include "mists/objectives.hpp"
#include "mists/scm_oracle.hpp"
#include "mists/training.hpp"
#include "mists_cli/cli.hpp"

namespace {

using namespace mists;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

const std::vector<std::uint64_t> kSeeds = {0, 1, 2};

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

double normal_cdf_ref(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// ---------------------------------------------------------------------------

Verdict gradient_correctness() {
  double worst_primitive = 0.0;
  std::string worst_name;
  for (const PrimitiveCheck& c : check_all_primitives(1e-5, 0)) {
    if (c.result.max_relative_error >= worst_primitive) {
      worst_primitive = c.result.max_relative_error;
      worst_name = c.name;
    }
  }

  TrainConfig config;
  config.d_zc = 2;
  config.d_zt = 2;
  config.hidden = 4;
  config.K = 2;
  const DomainStream stream = generate_circle(2, 4, false, 0);
  const ModelParams base = init_params(ModelDims::from_config(config, 2, 2), 0);
  Engine engine = make_engine(0, "gradcheck");
  std::vector<DomainNoise> noise;
  for (std::size_t t = 0; t < stream.size(); ++t) {
    noise.push_back(DomainNoise::draw(engine, 4, base.dims));
  }
  const ScalarProgram loss = [&](std::span<const Tensor> tensors) {
    const ModelParams p = base.with_trainable(tensors);
    SequenceState state = SequenceState::initial(p.dims);
    std::vector<DomainForward> forwards;
    for (std::size_t t = 0; t < stream.size(); ++t) {
      const Domain& d = stream.domains[t];
      forwards.push_back(forward_domain(p, to_tensor(d.X), d.y, state, noise[t], config));
    }
    return total_loss(forwards, config.alpha, config.beta, config.lambda).first;
  };
  const std::vector<Tensor> inputs = base.trainable();
  const GradCheckResult full = grad_check_detailed(loss, inputs, 1e-5);

  const bool pass = worst_primitive < 1e-4 && full.max_relative_error < 1e-4;
  return {pass, fmt("primitives max %.2e (%s), full loss max %.2e over %zu tensors",
                    worst_primitive, worst_name.c_str(), full.max_relative_error,
                    inputs.size())};
}

Verdict kl_mi_identity() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> size(1, 8);
  std::uniform_real_distribution<double> mass(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t nx = size(rng), nz = size(rng);
    std::vector<std::vector<double>> joint(nx, std::vector<double>(nz));
    std::vector<double> prior(nz);
    double tj = 0.0, tp = 0.0;
    for (auto& row : joint) {
      for (double& v : row) tj += (v = mass(rng) < 0.15 ? 0.0 : mass(rng));
    }
    for (double& v : prior) tp += (v = 0.01 + mass(rng));
    if (tj == 0.0) {
      joint[0][0] = tj = 1.0;
    }
    for (auto& row : joint) for (double& v : row) v /= tj;
    for (double& v : prior) v /= tp;
    worst = std::max(worst, kl_mi_identity_residual(joint, prior));
  }
  return {worst < 1e-12, fmt("max residual %.2e over 100 instances", worst)};
}

Verdict risk_gap() {
  bool pass = true;
  std::string detail;
  for (double mu_t : {0.5, 1.0, 2.0}) {
    const TheoremReport r =
        verify_theorem1(ScmParams::scalar(1.0, 1.0, mu_t, 1.0), 1, 1000000, 11);
    const double closed = normal_cdf_ref(-1.0) - normal_cdf_ref(-std::sqrt(1.0 + mu_t * mu_t));
    const bool ok = r.gap > 3.0 * r.stderr_ && std::abs(r.gap - closed) < 0.01;
    pass = pass && ok;
    detail += fmt("mu_t=%.1f gap %.4f (closed %.4f, se %.1e)%s", mu_t, r.gap, closed,
                  r.stderr_, mu_t < 2.0 ? "; " : "");
  }
  return {pass, detail};
}

Verdict kl_monte_carlo() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> dim(1, 4);
  std::uniform_real_distribution<double> mean(-1.5, 1.5), logvar(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  int within = 0;
  double worst_z = 0.0;
  for (int pair = 0; pair < 20; ++pair) {
    const std::size_t d = dim(rng);
    std::vector<double> mq(d), lq(d), mp(d), lp(d);
    for (std::size_t j = 0; j < d; ++j) {
      mq[j] = mean(rng);
      lq[j] = logvar(rng);
      mp[j] = mean(rng);
      lp[j] = logvar(rng);
    }
    const double kl = gaussian_kl({Tensor({1, d}, mq), Tensor({1, d}, lq)},
                                  {Tensor({1, d}, mp), Tensor({1, d}, lp)})
                          .item();
    const long n = 100000;
    double s = 0.0, s2 = 0.0;
    for (long i = 0; i < n; ++i) {
      double r = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double e = normal(rng);
        const double z = mq[j] + std::exp(0.5 * lq[j]) * e;
        const double dp = (z - mp[j]) * (z - mp[j]) / std::exp(lp[j]);
        r += 0.5 * (lp[j] - lq[j] + dp - e * e);
      }
      s += r;
      s2 += r * r;
    }
    const double est = s / n;
    const double se = std::sqrt(std::max(0.0, s2 / n - est * est) / (n - 1));
    const double z = std::abs(kl - est) / se;
    worst_z = std::max(worst_z, z);
    if (z <= 3.0) ++within;
  }
  return {within == 20, fmt("%d/20 pairs within 3 se (largest deviation %.2f se)", within,
                            worst_z)};
}

// ---------------------------------------------------------------------------

struct DatasetRuns {
  std::vector<double> mists, erm;
  TrainHistory history;  // seed 0
  double seconds = 0.0;

  double mists_mean() const { return mean(mists); }
  double erm_mean() const { return mean(erm); }
  static double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  }
};

DatasetRuns run_dataset(const DomainStream& stream, std::span<const std::uint64_t> seeds) {
  const auto start = Clock::now();
  const StreamSplit split = split_stream(stream);
  DatasetRuns runs;
  for (std::uint64_t seed : seeds) {
    TrainConfig config;
    config.seed = seed;
    TrainResult trained = train(split.source, config);
    runs.mists.push_back(evaluate_rollout(trained.params, split).target.average);
    if (seed == seeds.front()) runs.history = std::move(trained.history);
    const ErmParams erm = train_erm_baseline(split.source, config);
    runs.erm.push_back(evaluate_erm(erm, split).target.average);
  }
  runs.seconds = seconds_since(start);
  return runs;
}

std::string describe(const DatasetRuns& r) {
  std::string s = "MISTS";
  for (double v : r.mists) s += fmt(" %.3f", v);
  s += fmt(" (mean %.3f), ERM", r.mists_mean());
  for (double v : r.erm) s += fmt(" %.3f", v);
  s += fmt(" (mean %.3f), %.0f s", r.erm_mean(), r.seconds);
  return s;
}

Verdict ablation_directions() {
  const auto start = Clock::now();
  const StreamSplit split = split_stream(generate_scm(ScmParams::drifting(), 24, 200, 0));
  std::map<std::string, double> mean;
  std::string detail;
  for (const char* name : {"full", "A", "B", "C", "E"}) {
    const AblationResult r = run_ablation(split, TrainConfig{}, AblationSpec::variant(name),
                                          kSeeds);
    mean[name] = r.mean;
    detail += fmt("%s %.4f, ", name, r.mean);
  }
  const double secs = seconds_since(start);
  const bool a = mean["B"] <= mean["full"] - 0.10;
  const bool b = mean["C"] <= mean["A"];
  const bool c = mean["E"] < mean["full"];
  detail += fmt("B<=full-0.10 %s, C<=A %s, E<full %s, %.0f s", a ? "yes" : "no",
                b ? "yes" : "no", c ? "yes" : "no", secs);
  return {a && b && c && secs < 600.0, detail};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mists");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return code;
}

Verdict determinism() {
  const auto start = Clock::now();
  const fs::path root = fs::temp_directory_path() / "mists_acceptance_determinism";
  fs::remove_all(root);
  std::vector<std::string> checkpoints, metrics;
  for (const char* run : {"a", "b"}) {
    const fs::path dir = root / run;
    fs::create_directories(dir);
    const std::string data = (dir / "sine.csv").string();
    if (cli({"-q", "--seed", "5", "gen", "sine", "--out", data}) != 0 ||
        cli({"-q", "--seed", "5", "train", "--data", data, "--out", (dir / "run").string()}) != 0 ||
        cli({"-q", "eval", "--checkpoint", (dir / "run" / "checkpoint.txt").string(), "--data",
             data, "--out", (dir / "metrics.json").string()}) != 0) {
      return {false, "a command failed"};
    }
    checkpoints.push_back(slurp(dir / "run" / "checkpoint.txt"));
    metrics.push_back(slurp(dir / "metrics.json"));
  }
  fs::remove_all(root);
  const double secs = seconds_since(start);
  const bool same_cp = checkpoints[0] == checkpoints[1] && !checkpoints[0].empty();
  const bool same_metrics = metrics[0] == metrics[1] && !metrics[0].empty();
  return {same_cp && same_metrics && secs < 300.0,
          fmt("checkpoints %s (%zu bytes), metrics %s, %.0f s",
              same_cp ? "identical" : "differ", checkpoints[0].size(),
              same_metrics ? "identical" : "differ", secs)};
}

Verdict training_sanity(const std::map<std::string, const TrainHistory*>& histories) {
  bool pass = true;
  std::string detail;
  for (const auto& [name, h] : histories) {
    bool finite = h->size() == 200;
    for (const LossBreakdown& b : h->epochs) finite = finite && !b.first_non_finite();
    const double first = h->epochs.front().total, last = h->epochs.back().total;
    const double ratio = last / first;
    const bool ok = finite && first > 0.0 && ratio < 0.5;
    pass = pass && ok;
    detail += fmt("%s %.3f -> %.3f (ratio %.3f%s); ", name.c_str(), first, last, ratio,
                  finite ? "" : ", non-finite");
  }
  detail.resize(detail.size() - 2);
  return {pass, detail};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](const char* id, const char* what, const std::function<Verdict()>& check) {
    const auto start = Clock::now();
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::printf("%s %s %s: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", id, what,
                v.detail.c_str(), seconds_since(start));
    std::fflush(stdout);
  };

  report("AC1", "gradient correctness", gradient_correctness);
  report("AC2", "KL/MI decomposition identity", kl_mi_identity);
  report("AC3", "invariant-vs-Bayes risk gap", risk_gap);
  report("AC4", "closed-form KL vs Monte Carlo", kl_monte_carlo);

  std::optional<DatasetRuns> sine, sine_c, circle, circle_c;
  report("AC5", "Sine: MISTS >= ERM + 0.05 and >= 0.70", [&]() -> Verdict {
    sine = run_dataset(generate_sine(24, 200, std::nullopt, 0), kSeeds);
    const bool ok = sine->mists_mean() >= sine->erm_mean() + 0.05 &&
                    sine->mists_mean() >= 0.70 && sine->seconds < 300.0;
    return {ok, describe(*sine)};
  });
  report("AC6", "Sine-C: MISTS > ERM", [&]() -> Verdict {
    sine_c = run_dataset(generate_sine(24, 200, 6, 0), kSeeds);
    return {sine_c->mists_mean() > sine_c->erm_mean() && sine_c->seconds < 300.0,
            describe(*sine_c)};
  });
  report("AC7", "Circle: MISTS >= ERM + 0.05", [&]() -> Verdict {
    circle = run_dataset(generate_circle(30, 200, false, 0), kSeeds);
    return {circle->mists_mean() >= circle->erm_mean() + 0.05 && circle->seconds < 300.0,
            describe(*circle)};
  });
  report("AC8", "ablation directions on drifting SCM", ablation_directions);
  report("AC9", "end-to-end determinism", determinism);
  report("AC10", "training sanity on four datasets", [&]() -> Verdict {
    const std::uint64_t seed0[] = {0};
    circle_c = run_dataset(generate_circle(30, 200, true, 0), seed0);
    if (!sine || !sine_c || !circle) return {false, "earlier dataset runs are missing"};
    return training_sanity({{"sine", &sine->history},
                            {"sine-c", &sine_c->history},
                            {"circle", &circle->history},
                            {"circle-c", &circle_c->history}});
  });

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
