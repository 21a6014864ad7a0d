#include "mists/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace mists {

NumericalError::NumericalError(std::string term, LossBreakdown breakdown,
                               const std::string& where)
    : std::runtime_error("non-finite " + term + " " + where + ": " +
                         breakdown.to_json()),
      term_(std::move(term)),
      breakdown_(breakdown) {}

void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads,
               AdamState& state, const TrainConfig& config) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adam_step: " + std::to_string(params.size()) +
                                " parameters but " + std::to_string(grads.size()) +
                                " gradients");
  }
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].numel(), 0.0);
      state.v[i].assign(params[i].numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state has wrong arity");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].numel() || state.m[i].size() != grads[i].size()) {
      throw std::invalid_argument("adam_step: shape mismatch for parameter " +
                                  std::to_string(i) + " " +
                                  shape_string(params[i].shape()));
    }
  }
  ++state.step;
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].mutable_values();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      values[j] -= config.lr * m_hat / (std::sqrt(v_hat) + config.adam_eps);
    }
  }
}

double clip_global_norm(std::vector<std::vector<double>>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& g : grads)
      for (double& x : g) x *= f;
  }
  return norm;
}

std::vector<std::vector<double>> collect_grads(std::span<const Tensor> params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const Tensor& p : params) {
    if (p.has_grad()) {
      const auto g = p.grad();
      out.emplace_back(g.begin(), g.end());
    } else {
      out.emplace_back(p.numel(), 0.0);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

SequenceState SequenceState::initial(const ModelDims& dims) {
  SequenceState s;
  s.pi_q = RecurrentState::zeros(dims.hidden);
  s.pi_p = RecurrentState::zeros(dims.hidden);
  s.tau_q = RecurrentState::zeros(dims.hidden);
  s.tau_p = RecurrentState::zeros(dims.hidden);
  s.prev_z = Tensor::zeros({1, dims.d_zt});
  s.prev_w = Tensor::zeros({1, dims.K});
  return s;
}

SequenceState SequenceState::detach() const {
  return {pi_q.detach(), pi_p.detach(), tau_q.detach(), tau_p.detach(),
          prev_z.detach(), prev_w.detach()};
}

DomainNoise DomainNoise::draw(Engine& engine, std::size_t n, const ModelDims& dims) {
  DomainNoise noise;
  noise.zc = normal_noise(engine, {n, dims.d_zc});
  noise.zt = normal_noise(engine, {1, dims.d_zt});
  noise.gumbel = gumbel_noise(engine, {1, dims.K});
  return noise;
}

DomainForward forward_domain(const ModelParams& params, const Tensor& X,
                             std::span<const int> labels, SequenceState& state,
                             const DomainNoise& noise, const TrainConfig& config,
                             const AblationSpec& ablation) {
  const ModelDims& dims = params.dims;
  const std::size_t n = X.rows();
  if (n != labels.size()) {
    throw std::invalid_argument("forward_domain: " + std::to_string(n) + " rows but " +
                                std::to_string(labels.size()) + " labels");
  }
  if (n == 0) throw std::invalid_argument("forward_domain: empty domain batch");

  DomainForward out;
  out.x = X;
  out.labels.assign(labels.begin(), labels.end());
  const Tensor H = encode_base(params, X);
  out.zc_post = infer_static(params, H);
  out.zc_sample = gaussian_sample(out.zc_post, noise.zc);

  auto [zt_post, pi_q] = infer_dynamic_step(params, H, state.prev_z, state.pi_q);
  auto [zt_prior, pi_p] = prior_dynamic_step(params, state.prev_z, state.pi_p);
  out.zt_post = std::move(zt_post);
  out.zt_prior = std::move(zt_prior);
  out.zt_sample = gaussian_sample(out.zt_post, noise.zt);
  const Tensor zt_rows = repeat_rows(out.zt_sample, n);
  out.x_hat = decode(params, out.zc_sample, zt_rows);

  Tensor w;
  if (ablation.use_wt) {
    const Tensor summary = mean(one_hot(labels, dims.n_classes), 0);
    auto [w_post, tau_q] = classifier_posterior_step(params, state.prev_w, summary,
                                                     state.tau_q);
    auto [w_prior, tau_p] = classifier_prior_step(params, state.prev_w, state.tau_p);
    w = gumbel_softmax(w_post, config.temperature, noise.gumbel);
    out.w_post = std::move(w_post);
    out.w_prior = std::move(w_prior);
    state.tau_q = std::move(tau_q);
    state.tau_p = std::move(tau_p);
    state.prev_w = w;
  } else {
    std::vector<double> first(dims.K, 0.0);
    first[0] = 1.0;
    w = Tensor({1, dims.K}, std::move(first));
  }

  const Tensor zc_cls = config.classify_with_means ? out.zc_post.mu : out.zc_sample;
  const Tensor zt_cls =
      config.classify_with_means ? repeat_rows(out.zt_post.mu, n) : zt_rows;
  const Tensor zc_head = ablation.use_zc ? zc_cls : Tensor::zeros({n, dims.d_zc});
  const Tensor zt_head = ablation.use_zt ? zt_cls : Tensor::zeros({n, dims.d_zt});
  out.logits = predict(params, zc_head, zt_head, w);

  state.pi_q = std::move(pi_q);
  state.pi_p = std::move(pi_p);
  state.prev_z = out.zt_sample;
  return out;
}

std::pair<Tensor, Tensor> input_standardisation(const DomainStream& source) {
  const std::size_t d = source.feature_dim;
  std::vector<double> mean(d, 0.0), sq(d, 0.0);
  double count = 0.0;
  for (const Domain& dom : source.domains) {
    for (Eigen::Index i = 0; i < dom.X.rows(); ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        const double x = dom.X(i, static_cast<Eigen::Index>(j));
        mean[j] += x;
        sq[j] += x * x;
      }
      count += 1.0;
    }
  }
  if (count == 0.0) throw std::invalid_argument("input standardisation: no samples");
  std::vector<double> inv_std(d);
  for (std::size_t j = 0; j < d; ++j) {
    mean[j] /= count;
    const double var = std::max(0.0, sq[j] / count - mean[j] * mean[j]);
    inv_std[j] = 1.0 / std::max(std::sqrt(var), 1e-8);
  }
  return {Tensor({1, d}, std::move(mean)), Tensor({1, d}, std::move(inv_std))};
}

void fit_input_standardisation(ModelParams& params, const DomainStream& source) {
  if (source.feature_dim != params.dims.input_dim) {
    throw std::invalid_argument("input standardisation: stream has " +
                                std::to_string(source.feature_dim) +
                                " features, model expects " +
                                std::to_string(params.dims.input_dim));
  }
  std::tie(params.input_shift, params.input_scale) = input_standardisation(source);
}

std::string TrainHistory::to_csv() const {
  std::string out = "epoch";
  for (const auto& name : LossBreakdown::field_names()) out += "," + name;
  out += ",seconds\n";
  char buf[64];
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    out += std::to_string(e);
    for (double v : epochs[e].values()) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out += buf;
    }
    std::snprintf(buf, sizeof buf, ",%.6f\n", seconds[e]);
    out += buf;
  }
  return out;
}

void TrainHistory::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << to_csv();
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t epoch,
                                       int domain, std::size_t n,
                                       std::size_t batch_size) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Engine engine = make_engine(seed, "batching", epoch, static_cast<std::uint64_t>(domain));
  std::shuffle(idx.begin(), idx.end(), engine);
  idx.resize(std::min(n, batch_size));
  return idx;
}

Tensor gather_rows(const Matrix& X, std::span<const std::size_t> rows) {
  const auto d = static_cast<std::size_t>(X.cols());
  std::vector<double> v(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      v[i * d + j] = X(static_cast<Eigen::Index>(rows[i]), static_cast<Eigen::Index>(j));
    }
  }
  return Tensor({rows.size(), d}, std::move(v));
}

TrainResult train(const DomainStream& source, const TrainConfig& config,
                  const AblationSpec& ablation, const EpochObserver& observer) {
  config.validate();
  ablation.validate();
  source.validate();
  if (source.size() < 2) {
    throw std::invalid_argument("train: need at least 2 source domains");
  }
  const ModelDims dims =
      ModelDims::from_config(config, source.feature_dim, source.n_classes);
  TrainResult result{init_params(dims, config.seed), {}};
  ModelParams& params = result.params;
  if (config.standardize_inputs) fit_input_standardisation(params, source);

  std::vector<Tensor> trainable = params.trainable();
  AdamState adam;
  MiMemory memory(config.mi_memory);
  const double beta = ablation.use_mi ? config.beta : 0.0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    SequenceState state = SequenceState::initial(dims);
    memory.clear();
    LossBreakdown sum;
    for (const Domain& domain : source.domains) {
      const auto rows = batch_indices(config.seed, epoch, domain.index, domain.size(),
                                      config.batch_size);
      const Tensor X = gather_rows(domain.X, rows);
      std::vector<int> labels(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) labels[i] = domain.y[rows[i]];
      Engine engine = make_engine(config.seed, "noise", epoch,
                                  static_cast<std::uint64_t>(domain.index));
      const DomainNoise noise = DomainNoise::draw(engine, rows.size(), dims);

      const DomainForward fwd =
          forward_domain(params, X, labels, state, noise, config, ablation);
      auto [loss, br] = total_loss(std::span(&fwd, 1), config.alpha, beta,
                                   config.lambda, &memory);
      const std::string where = "at epoch " + std::to_string(epoch) + ", domain " +
                                std::to_string(domain.index);
      if (auto bad = br.first_non_finite()) throw NumericalError(*bad, br, where);

      for (Tensor& p : trainable) p.zero_grad();
      loss.backward();
      auto grads = collect_grads(trainable);
      const double norm = clip_global_norm(grads, config.grad_clip);
      if (!std::isfinite(norm)) throw NumericalError("gradient", br, where);
      adam_step(trainable, grads, adam, config);

      memory.append(fwd);
      state = state.detach();
      sum += br;
    }
    const LossBreakdown avg = sum.scaled(1.0 / static_cast<double>(source.size()));
    result.history.epochs.push_back(avg);
    result.history.seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    if (observer) observer(epoch, avg);
  }
  for (Tensor& p : trainable) p.zero_grad();
  return result;
}

}  // namespace mists
