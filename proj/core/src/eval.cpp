#include "mists/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mists/training.hpp"

namespace mists {

namespace {

Tensor hard_one_hot(const Tensor& logits) {
  const auto v = logits.values();
  const auto best = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
  std::vector<double> out(v.size(), 0.0);
  out[best] = 1.0;
  return Tensor({1, v.size()}, std::move(out));
}

Tensor first_head(std::size_t K) {
  std::vector<double> v(K, 0.0);
  v[0] = 1.0;
  return Tensor({1, K}, std::move(v));
}

void check_follows(const DomainStream& source, std::span<const UnlabeledDomain> targets) {
  int expected = source.domains.back().index + 1;
  for (const UnlabeledDomain& t : targets) {
    if (t.index != expected) {
      throw std::invalid_argument("target domain " + std::to_string(t.index) +
                                  " does not follow domain " +
                                  std::to_string(expected - 1));
    }
    if (t.X.rows() == 0) {
      throw std::invalid_argument("target domain " + std::to_string(t.index) + " is empty");
    }
    ++expected;
  }
}

}  // namespace

ModelParams frozen(const ModelParams& params) {
  ModelParams copy = params;
  for (auto& [name, t] : copy.named()) *t = t->detach();
  return copy;
}

std::string Metrics::to_json(const std::map<std::string, std::string>& extra) const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  nlohmann::ordered_json counts = nlohmann::ordered_json::object();
  for (const auto& [t, acc] : per_domain) per[std::to_string(t)] = acc;
  for (const auto& [t, count] : n) counts[std::to_string(t)] = count;
  j["per_domain"] = per;
  j["average"] = average;
  j["n"] = counts;
  for (const auto& [key, value] : extra) j[key] = value;
  return j.dump(2);
}

std::vector<DomainLatents> infer_domain_latents(const ModelParams& params,
                                                const DomainStream& source,
                                                std::span<const UnlabeledDomain> targets,
                                                const AblationSpec& ablation) {
  ablation.validate();
  source.validate();
  if (source.feature_dim != params.dims.input_dim) {
    throw std::invalid_argument("source has " + std::to_string(source.feature_dim) +
                                " features, model expects " +
                                std::to_string(params.dims.input_dim));
  }
  check_follows(source, targets);
  const ModelParams p = frozen(params);
  const ModelDims& dims = p.dims;
  SequenceState state = SequenceState::initial(dims);
  std::vector<DomainLatents> out;

  for (const Domain& d : source.domains) {
    const Tensor H = encode_base(p, to_tensor(d.X));
    auto [zt_post, pi_q] = infer_dynamic_step(p, H, state.prev_z, state.pi_q);
    state.pi_q = pi_q;
    state.prev_z = zt_post.mu;
    Tensor w = first_head(dims.K);
    if (ablation.use_wt) {
      const Tensor summary = mean(one_hot(d.y, dims.n_classes), 0);
      auto [w_post, tau_q] = classifier_posterior_step(p, state.prev_w, summary, state.tau_q);
      auto [w_prior, tau_p] = classifier_prior_step(p, state.prev_w, state.tau_p);
      state.tau_q = tau_q;
      state.tau_p = tau_p;
      w = hard_one_hot(w_post.logits);
      state.prev_w = w;
    }
    out.push_back({d.index, zt_post.mu, w, false});
  }

  for (const UnlabeledDomain& d : targets) {
    Tensor w = first_head(dims.K);
    if (ablation.use_wt) {
      auto [w_prior, tau_p] = classifier_prior_step(p, state.prev_w, state.tau_p);
      state.tau_p = tau_p;
      w = hard_one_hot(w_prior.logits);
      state.prev_w = w;
    }
    const Tensor H = encode_base(p, to_tensor(d.X));
    auto [zt_post, pi_q] = infer_dynamic_step(p, H, state.prev_z, state.pi_q);
    state.pi_q = pi_q;
    state.prev_z = zt_post.mu;
    out.push_back({d.index, zt_post.mu, w, true});
  }
  return out;
}

Tensor predict_with_latents(const ModelParams& params, const Tensor& X,
                            const DomainLatents& latents, const AblationSpec& ablation) {
  const std::size_t n = X.rows();
  const Tensor H = encode_base(params, X);
  const Tensor zc = ablation.use_zc ? infer_static(params, H).mu
                                    : Tensor::zeros({n, params.dims.d_zc});
  const Tensor zt = ablation.use_zt ? repeat_rows(latents.z_t, n)
                                    : Tensor::zeros({n, params.dims.d_zt});
  return predict(params, zc, zt, latents.w).detach();
}

Predictions rollout_predict(const ModelParams& params, const DomainStream& source,
                            std::span<const UnlabeledDomain> targets,
                            const AblationSpec& ablation) {
  const ModelParams p = frozen(params);
  const auto latents = infer_domain_latents(p, source, targets, ablation);
  Predictions out;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const DomainLatents& lat = latents[source.size() + k];
    out.push_back({targets[k].index,
                   predict_with_latents(p, to_tensor(targets[k].X), lat, ablation)});
  }
  return out;
}

Predictions predict_erm_domains(const ErmParams& params,
                                std::span<const UnlabeledDomain> targets) {
  Predictions out;
  for (const UnlabeledDomain& d : targets) {
    out.push_back({d.index, predict_erm(params, to_tensor(d.X)).detach()});
  }
  return out;
}

Metrics evaluate(const Predictions& predictions, const DomainStream& targets) {
  if (predictions.size() != targets.size()) {
    throw std::invalid_argument("evaluate: " + std::to_string(predictions.size()) +
                                " predicted domains for " +
                                std::to_string(targets.size()) + " targets");
  }
  if (predictions.empty()) throw std::invalid_argument("evaluate: no domains");
  Metrics m;
  double total = 0.0;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    const DomainPrediction& pred = predictions[k];
    const Domain& dom = targets.domains[k];
    if (pred.index != dom.index || pred.logits.rank() != 2 ||
        pred.logits.rows() != dom.size()) {
      throw std::invalid_argument("evaluate: prediction for domain " +
                                  std::to_string(pred.index) + " " +
                                  shape_string(pred.logits.shape()) +
                                  " does not align with domain " +
                                  std::to_string(dom.index) + " of " +
                                  std::to_string(dom.size()) + " samples");
    }
    const std::size_t C = pred.logits.cols();
    const auto v = pred.logits.values();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < dom.size(); ++i) {
      const auto row = v.subspan(i * C, C);
      const auto arg = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      if (arg == dom.y[i]) ++correct;
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(dom.size());
    m.per_domain[dom.index] = acc;
    m.n[dom.index] = dom.size();
    total += acc;
  }
  m.average = total / static_cast<double>(predictions.size());
  return m;
}

namespace {

SplitMetrics split_metrics(const Predictions& predictions, const StreamSplit& split) {
  const std::size_t n_val = split.intermediate.size();
  const Predictions val(predictions.begin(), predictions.begin() + static_cast<long>(n_val));
  const Predictions tgt(predictions.begin() + static_cast<long>(n_val), predictions.end());
  return {evaluate(val, split.intermediate), evaluate(tgt, split.target)};
}

}  // namespace

SplitMetrics evaluate_rollout(const ModelParams& params, const StreamSplit& split,
                              const AblationSpec& ablation) {
  const auto later = strip_labels(join_streams(split.intermediate, split.target));
  return split_metrics(rollout_predict(params, split.source, later, ablation), split);
}

SplitMetrics evaluate_erm(const ErmParams& params, const StreamSplit& split) {
  const auto later = strip_labels(join_streams(split.intermediate, split.target));
  return split_metrics(predict_erm_domains(params, later), split);
}

AblationResult run_ablation(const StreamSplit& split, const TrainConfig& base_config,
                            const AblationSpec& spec,
                            std::span<const std::uint64_t> seeds) {
  spec.validate();
  if (seeds.empty()) throw std::invalid_argument("run_ablation: no seeds");
  AblationResult result;
  result.spec = spec;
  for (std::uint64_t seed : seeds) {
    TrainConfig config = base_config;
    config.seed = seed;
    const TrainResult trained = train(split.source, config, spec);
    result.seeds.push_back(seed);
    result.per_seed.push_back(evaluate_rollout(trained.params, split, spec).target);
  }
  double sum = 0.0, sq = 0.0;
  for (const Metrics& m : result.per_seed) {
    sum += m.average;
    sq += m.average * m.average;
  }
  const double k = static_cast<double>(result.per_seed.size());
  result.mean = sum / k;
  result.stddev = k > 1 ? std::sqrt(std::max(0.0, (sq - k * result.mean * result.mean) / (k - 1)))
                        : 0.0;
  return result;
}

std::vector<BoundaryRow> export_decision_boundary(const DomainPredictFn& predict,
                                                  std::span<const int> domains,
                                                  std::array<double, 2> x_limits,
                                                  std::array<double, 2> y_limits,
                                                  std::size_t resolution) {
  if (resolution < 2) throw std::invalid_argument("boundary resolution must be >= 2");
  const std::size_t m = resolution * resolution;
  std::vector<double> grid(2 * m);
  const double step_x = (x_limits[1] - x_limits[0]) / static_cast<double>(resolution - 1);
  const double step_y = (y_limits[1] - y_limits[0]) / static_cast<double>(resolution - 1);
  for (std::size_t r = 0; r < resolution; ++r) {
    for (std::size_t c = 0; c < resolution; ++c) {
      grid[2 * (r * resolution + c)] = x_limits[0] + step_x * static_cast<double>(c);
      grid[2 * (r * resolution + c) + 1] = y_limits[0] + step_y * static_cast<double>(r);
    }
  }
  const Tensor X({m, 2}, grid);
  std::vector<BoundaryRow> rows;
  rows.reserve(domains.size() * m);
  for (int t : domains) {
    const Tensor logits = predict(t, X);
    if (logits.rank() != 2 || logits.rows() != m) {
      throw std::invalid_argument("boundary predictor returned shape " +
                                  shape_string(logits.shape()));
    }
    const Tensor probs = softmax(logits, 1);
    const std::size_t C = logits.cols();
    const auto pv = probs.values();
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = pv.subspan(i * C, C);
      const auto best = std::max_element(row.begin(), row.end());
      rows.push_back({t, grid[2 * i], grid[2 * i + 1],
                      static_cast<int>(best - row.begin()), *best});
    }
  }
  return rows;
}

std::string boundary_csv(std::span<const BoundaryRow> rows) {
  std::string out = "t,x0,x1,pred,score\n";
  char buf[160];
  for (const BoundaryRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%d,%.17g\n", r.t, r.x0, r.x1, r.pred,
                  r.score);
    out += buf;
  }
  return out;
}

BoundaryPredictor::BoundaryPredictor(const ModelParams& params,
                                     const DomainStream& source,
                                     std::span<const UnlabeledDomain> later)
    : params_(frozen(params)) {
  if (params.dims.input_dim != 2) {
    throw std::invalid_argument("decision boundaries need 2-D features, model has " +
                                std::to_string(params.dims.input_dim));
  }
  for (auto& lat : infer_domain_latents(params_, source, later)) {
    const int t = lat.index;
    latents_.emplace(t, std::move(lat));
  }
}

Tensor BoundaryPredictor::operator()(int t, const Tensor& X) const {
  const auto it = latents_.find(t);
  if (it == latents_.end()) {
    throw std::invalid_argument("no latents for domain " + std::to_string(t));
  }
  return predict_with_latents(params_, X, it->second);
}

std::vector<int> BoundaryPredictor::domains() const {
  std::vector<int> out;
  for (const auto& [t, lat] : latents_) out.push_back(t);
  return out;
}

}  // namespace mists
