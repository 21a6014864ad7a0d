#include "mists/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include "mists/distributions.hpp"
#include "mists/model.hpp"
#include "mists/rng.hpp"
#include "mists/training.hpp"

namespace mists {

namespace {

template <typename Self, typename Out>
void collect(Self& p, Out& out) {
  out.emplace_back("input.shift", &p.input_shift);
  out.emplace_back("input.scale", &p.input_scale);
  out.emplace_back("theta.W", &p.theta_W);
  out.emplace_back("theta.b", &p.theta_b);
  out.emplace_back("head.W", &p.head_W);
  out.emplace_back("head.b", &p.head_b);
}

Tensor uniform_weight(Engine& engine, std::size_t fan_in, std::size_t fan_out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> v(fan_in * fan_out);
  for (double& x : v) x = u(engine);
  Tensor t({fan_in, fan_out}, std::move(v));
  t.set_requires_grad();
  return t;
}

Tensor zero_bias(std::size_t width) {
  Tensor t = Tensor::zeros({1, width});
  t.set_requires_grad();
  return t;
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> ErmParams::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  collect(*this, out);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ErmParams::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  collect(*this, out);
  return out;
}

std::vector<Tensor> ErmParams::trainable() const {
  return {theta_W, theta_b, head_W, head_b};
}

ErmParams init_erm_params(std::size_t input_dim, std::size_t n_classes,
                          std::size_t hidden, std::uint64_t seed) {
  if (input_dim == 0 || n_classes < 2 || hidden == 0) {
    throw std::invalid_argument("init_erm_params: invalid dimensions");
  }
  Engine engine = make_engine(seed, "init-erm");
  ErmParams p;
  p.input_dim = input_dim;
  p.n_classes = n_classes;
  p.hidden = hidden;
  p.input_shift = Tensor::zeros({1, input_dim});
  p.input_scale = Tensor::ones({1, input_dim});
  p.theta_W = uniform_weight(engine, input_dim, hidden);
  p.theta_b = zero_bias(hidden);
  p.head_W = uniform_weight(engine, hidden, n_classes);
  p.head_b = zero_bias(n_classes);
  return p;
}

Tensor predict_erm(const ErmParams& params, const Tensor& X) {
  if (X.rank() != 2 || X.cols() != params.input_dim) {
    throw std::invalid_argument("predict_erm: expected " +
                                std::to_string(params.input_dim) +
                                " feature columns, got " + shape_string(X.shape()));
  }
  const std::size_t n = X.rows();
  const Tensor scaled =
      add_row(X, -params.input_shift) * repeat_rows(params.input_scale, n);
  const Tensor H = tanh(add_row(matmul(scaled, params.theta_W), params.theta_b));
  return add_row(matmul(H, params.head_W), params.head_b);
}

Tensor irm_gradient_at_one(const Tensor& logits, std::span<const int> labels) {
  const Tensor residual = softmax(logits, 1) - one_hot(labels, logits.cols());
  return mean(sum(residual * logits, 1));
}

double irm_penalty(std::span<const ScalarRisk> per_domain_risks) {
  double total = 0.0;
  for (const ScalarRisk& risk : per_domain_risks) {
    Tensor w = Tensor::scalar(1.0);
    w.set_requires_grad();
    const Tensor r = risk(w);
    if (r.numel() != 1) throw std::invalid_argument("irm_penalty: risk must be scalar");
    if (!r.requires_grad()) continue;  // risk does not depend on w
    r.backward();
    const double g = w.has_grad() ? w.grad()[0] : 0.0;
    total += g * g;
  }
  return total;
}

ErmParams train_erm_baseline(const DomainStream& source, const TrainConfig& config,
                             double irm_weight) {
  config.validate();
  source.validate();
  if (source.size() < 1) throw std::invalid_argument("ERM: empty source stream");
  if (irm_weight < 0.0) throw std::invalid_argument("ERM: irm_weight must be >= 0");

  ErmParams params =
      init_erm_params(source.feature_dim, source.n_classes, config.hidden, config.seed);
  if (config.standardize_inputs) {
    std::tie(params.input_shift, params.input_scale) = input_standardisation(source);
  }

  struct Row {
    std::size_t domain;
    std::size_t index;
  };
  std::vector<Row> pool;
  for (std::size_t d = 0; d < source.size(); ++d)
    for (std::size_t i = 0; i < source.domains[d].size(); ++i) pool.push_back({d, i});

  std::vector<Tensor> trainable = params.trainable();
  AdamState adam;
  const std::size_t steps = source.size();
  const std::size_t batch = std::min(config.batch_size, pool.size());
  const std::size_t dim = source.feature_dim;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Engine engine = make_engine(config.seed, "erm-batching", epoch);
    std::shuffle(pool.begin(), pool.end(), engine);
    for (std::size_t step = 0; step < steps; ++step) {
      std::vector<double> xs;
      std::vector<int> ys;
      std::map<std::size_t, std::vector<std::size_t>> by_domain;
      for (std::size_t b = 0; b < batch; ++b) {
        const Row& row = pool[(step * batch + b) % pool.size()];
        const Domain& dom = source.domains[row.domain];
        for (std::size_t j = 0; j < dim; ++j)
          xs.push_back(dom.X(static_cast<Eigen::Index>(row.index), static_cast<Eigen::Index>(j)));
        ys.push_back(dom.y[row.index]);
        by_domain[row.domain].push_back(b);
      }
      const Tensor X({batch, dim}, std::move(xs));
      const Tensor logits = predict_erm(params, X);
      Tensor loss = cross_entropy(logits, ys);
      if (irm_weight > 0.0) {
        Tensor penalty = Tensor::scalar(0.0);
        for (const auto& [d, rows] : by_domain) {
          std::vector<double> sel(rows.size() * batch, 0.0);
          std::vector<int> labels;
          for (std::size_t r = 0; r < rows.size(); ++r) {
            sel[r * batch + rows[r]] = 1.0;
            labels.push_back(ys[rows[r]]);
          }
          const Tensor picked = matmul(Tensor({rows.size(), batch}, std::move(sel)), logits);
          penalty = penalty + square(irm_gradient_at_one(picked, labels));
        }
        loss = loss + scale(penalty, irm_weight);
      }
      if (!std::isfinite(loss.item())) {
        LossBreakdown br;
        br.cls_nll = loss.item();
        br.total = loss.item();
        throw NumericalError("cls_nll", br, "in ERM at epoch " + std::to_string(epoch));
      }
      for (Tensor& p : trainable) p.zero_grad();
      loss.backward();
      auto grads = collect_grads(trainable);
      clip_global_norm(grads, config.grad_clip);
      adam_step(trainable, grads, adam, config);
    }
  }
  for (Tensor& p : trainable) p.zero_grad();
  return params;
}

}  // namespace mists
