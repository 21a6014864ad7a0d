#include "mists/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "mists/rng.hpp"

namespace mists {

namespace {

void expect_shape(const Tensor& t, const Shape& shape, const char* what) {
  if (t.shape() != shape) {
    throw std::invalid_argument(std::string(what) + ": expected shape " +
                                shape_string(shape) + ", got " +
                                shape_string(t.shape()));
  }
}

void expect_cols(const Tensor& t, std::size_t cols, const char* what) {
  if (t.rank() != 2 || t.cols() != cols) {
    throw std::invalid_argument(std::string(what) + ": expected " +
                                std::to_string(cols) + " columns, got shape " +
                                shape_string(t.shape()));
  }
}

Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b) {
  return add_row(matmul(x, W), b);
}

GaussianParams gaussian_head(const GaussianHead& head, const Tensor& h, double clamp) {
  return {linear(h, head.W_mu, head.b_mu),
          soft_clamp(linear(h, head.W_logvar, head.b_logvar), clamp)};
}

// Expansion E (K x K C) with E[k, k C + c] = 1 and summation S (K C x C).
Tensor bank_expansion(std::size_t K, std::size_t C) {
  std::vector<double> v(K * K * C, 0.0);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t c = 0; c < C; ++c) v[k * K * C + k * C + c] = 1.0;
  return Tensor({K, K * C}, std::move(v));
}

Tensor bank_summation(std::size_t K, std::size_t C) {
  std::vector<double> v(K * C * C, 0.0);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t c = 0; c < C; ++c) v[(k * C + c) * C + c] = 1.0;
  return Tensor({K * C, C}, std::move(v));
}

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : engine_(make_engine(seed, "init")) {}

  Tensor weight(std::size_t fan_in, std::size_t fan_out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> v(fan_in * fan_out);
    for (double& x : v) x = u(engine_);
    Tensor t({fan_in, fan_out}, std::move(v));
    t.set_requires_grad();
    return t;
  }

  static Tensor bias(std::size_t width) {
    Tensor t = Tensor::zeros({1, width});
    t.set_requires_grad();
    return t;
  }

  LstmCell lstm(std::size_t in, std::size_t hidden) {
    return {weight(in + hidden, 4 * hidden), bias(4 * hidden)};
  }

  GaussianHead head(std::size_t in, std::size_t out) {
    GaussianHead h;
    h.W_mu = weight(in, out);
    h.b_mu = bias(out);
    h.W_logvar = weight(in, out);
    h.b_logvar = bias(out);
    return h;
  }

 private:
  Engine engine_;
};

template <typename Self, typename Out>
void collect(Self& p, Out& out) {
  auto add = [&](const std::string& name, auto& t) { out.emplace_back(name, &t); };
  auto add_lstm = [&](const std::string& name, auto& cell) {
    add(name + ".W", cell.W);
    add(name + ".b", cell.b);
  };
  auto add_head = [&](const std::string& name, auto& head) {
    add(name + ".W_mu", head.W_mu);
    add(name + ".b_mu", head.b_mu);
    add(name + ".W_logvar", head.W_logvar);
    add(name + ".b_logvar", head.b_logvar);
  };
  add("input.shift", p.input_shift);
  add("input.scale", p.input_scale);
  add("theta.W", p.theta_W);
  add("theta.b", p.theta_b);
  add_lstm("kappa_c.cell", p.kappa_c);
  add_head("kappa_c.head", p.kappa_head);
  add_lstm("pi_q.cell", p.pi_q);
  add_head("pi_q.head", p.pi_q_head);
  add_lstm("pi_p.cell", p.pi_p);
  add_head("pi_p.head", p.pi_p_head);
  add("decoder.W1", p.dec_W1);
  add("decoder.b1", p.dec_b1);
  add("decoder.W2", p.dec_W2);
  add("decoder.b2", p.dec_b2);
  add_lstm("tau_p.cell", p.tau_p);
  add("tau_p.W", p.tau_p_W);
  add("tau_p.b", p.tau_p_b);
  add_lstm("tau_q.cell", p.tau_q);
  add("tau_q.W", p.tau_q_W);
  add("tau_q.b", p.tau_q_b);
  add("bank.W", p.bank_W);
  add("bank.b", p.bank_b);
}

}  // namespace

ModelDims ModelDims::from_config(const TrainConfig& config, std::size_t input_dim,
                                 std::size_t n_classes) {
  ModelDims d;
  d.input_dim = input_dim;
  d.n_classes = n_classes;
  d.d_zc = config.d_zc;
  d.d_zt = config.d_zt;
  d.hidden = config.hidden;
  d.K = config.K;
  d.logvar_clamp = config.logvar_clamp;
  return d;
}

RecurrentState RecurrentState::zeros(std::size_t width) {
  return {Tensor::zeros({1, width}), Tensor::zeros({1, width})};
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  collect(*this, out);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  collect(*this, out);
  return out;
}

std::vector<Tensor> ModelParams::trainable() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : named()) {
    if (t->requires_grad()) out.push_back(*t);
  }
  return out;
}

ModelParams ModelParams::clone() const {
  ModelParams copy = *this;
  for (auto& [name, t] : copy.named()) {
    const bool grad = t->requires_grad();
    *t = t->detach();
    if (grad) t->set_requires_grad();
  }
  return copy;
}

ModelParams ModelParams::with_trainable(std::span<const Tensor> tensors) const {
  ModelParams copy = *this;
  std::size_t next = 0;
  for (auto& [name, t] : copy.named()) {
    if (!t->requires_grad()) continue;
    if (next >= tensors.size() || tensors[next].shape() != t->shape()) {
      throw std::invalid_argument("with_trainable: tensor for '" + name +
                                  "' is missing or has the wrong shape");
    }
    *t = tensors[next++];
  }
  if (next != tensors.size()) {
    throw std::invalid_argument("with_trainable: too many tensors");
  }
  return copy;
}

ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
  if (dims.input_dim == 0 || dims.n_classes < 2 || dims.d_zc == 0 ||
      dims.d_zt == 0 || dims.hidden == 0 || dims.K == 0) {
    throw std::invalid_argument("init_params: every dimension must be positive "
                                "and n_classes >= 2");
  }
  const std::size_t d = dims.input_dim, h = dims.hidden, C = dims.n_classes;
  const std::size_t z = dims.d_zc + dims.d_zt, K = dims.K;
  Initializer init(seed);
  ModelParams p;
  p.dims = dims;
  p.input_shift = Tensor::zeros({1, d});
  p.input_scale = Tensor::ones({1, d});
  p.theta_W = init.weight(d, h);
  p.theta_b = Initializer::bias(h);
  p.kappa_c = init.lstm(h, h);
  p.kappa_head = init.head(h, dims.d_zc);
  p.pi_q = init.lstm(h + dims.d_zt, h);
  p.pi_q_head = init.head(h, dims.d_zt);
  p.pi_p = init.lstm(h + dims.d_zt, h);
  p.pi_p_head = init.head(h, dims.d_zt);
  p.dec_W1 = init.weight(z, h);
  p.dec_b1 = Initializer::bias(h);
  p.dec_W2 = init.weight(h, d);
  p.dec_b2 = Initializer::bias(d);
  p.tau_p = init.lstm(K, h);
  p.tau_p_W = init.weight(h, K);
  p.tau_p_b = Initializer::bias(K);
  p.tau_q = init.lstm(K + C, h);
  p.tau_q_W = init.weight(h, K);
  p.tau_q_b = Initializer::bias(K);
  p.bank_W = init.weight(z, K * C);
  p.bank_b = Initializer::bias(K * C);
  return p;
}

Tensor repeat_rows(const Tensor& row, std::size_t n) {
  if (row.rank() != 2 || row.rows() != 1) {
    throw std::invalid_argument("repeat_rows: expected a 1 x m row, got " +
                                shape_string(row.shape()));
  }
  if (n == 1) return row;
  return matmul(Tensor::ones({n, 1}), row);
}

RecurrentState lstm_step(const LstmCell& cell, const Tensor& x,
                         const RecurrentState& state) {
  const std::size_t h = state.hidden.cols();
  const Tensor gates = linear(concat({x, state.hidden}, 1), cell.W, cell.b);
  const Tensor i = sigmoid(slice(gates, 1, 0, h));
  const Tensor f = sigmoid(slice(gates, 1, h, 2 * h));
  const Tensor g = tanh(slice(gates, 1, 2 * h, 3 * h));
  const Tensor o = sigmoid(slice(gates, 1, 3 * h, 4 * h));
  const Tensor c = f * state.cell + i * g;
  return {o * tanh(c), c};
}

Tensor encode_base(const ModelParams& params, const Tensor& X) {
  expect_cols(X, params.dims.input_dim, "encode_base");
  const std::size_t n = X.rows();
  const Tensor shifted = add_row(X, -params.input_shift);
  const Tensor scaled = shifted * repeat_rows(params.input_scale, n);
  return tanh(linear(scaled, params.theta_W, params.theta_b));
}

GaussianParams infer_static(const ModelParams& params, const Tensor& H) {
  expect_cols(H, params.dims.hidden, "infer_static");
  const std::size_t n = H.rows(), h = params.dims.hidden;
  const RecurrentState zero{Tensor::zeros({n, h}), Tensor::zeros({n, h})};
  const RecurrentState out = lstm_step(params.kappa_c, H, zero);
  return gaussian_head(params.kappa_head, out.hidden, params.dims.logvar_clamp);
}

std::pair<GaussianParams, RecurrentState> infer_dynamic_step(
    const ModelParams& params, const Tensor& H_t, const Tensor& prev_z,
    const RecurrentState& state) {
  expect_cols(H_t, params.dims.hidden, "infer_dynamic_step");
  expect_shape(prev_z, {1, params.dims.d_zt}, "infer_dynamic_step prev_z");
  const Tensor pooled = mean(H_t, 0);
  RecurrentState next = lstm_step(params.pi_q, concat({pooled, prev_z}, 1), state);
  GaussianParams out =
      gaussian_head(params.pi_q_head, next.hidden, params.dims.logvar_clamp);
  return {std::move(out), std::move(next)};
}

std::pair<GaussianParams, RecurrentState> prior_dynamic_step(
    const ModelParams& params, const Tensor& prev_z, const RecurrentState& state) {
  expect_shape(prev_z, {1, params.dims.d_zt}, "prior_dynamic_step prev_z");
  const Tensor input = concat({Tensor::zeros({1, params.dims.hidden}), prev_z}, 1);
  RecurrentState next = lstm_step(params.pi_p, input, state);
  GaussianParams out =
      gaussian_head(params.pi_p_head, next.hidden, params.dims.logvar_clamp);
  return {std::move(out), std::move(next)};
}

Tensor decode(const ModelParams& params, const Tensor& z_c, const Tensor& z_t) {
  expect_cols(z_c, params.dims.d_zc, "decode z_c");
  expect_cols(z_t, params.dims.d_zt, "decode z_t");
  if (z_c.rows() != z_t.rows()) {
    throw std::invalid_argument("decode: z_c and z_t row counts differ");
  }
  const Tensor hidden = tanh(linear(concat({z_c, z_t}, 1), params.dec_W1, params.dec_b1));
  return linear(hidden, params.dec_W2, params.dec_b2);
}

std::pair<CategoricalParams, RecurrentState> classifier_prior_step(
    const ModelParams& params, const Tensor& prev_w, const RecurrentState& state) {
  expect_shape(prev_w, {1, params.dims.K}, "classifier_prior_step prev_w");
  RecurrentState next = lstm_step(params.tau_p, prev_w, state);
  CategoricalParams out{linear(next.hidden, params.tau_p_W, params.tau_p_b)};
  return {std::move(out), std::move(next)};
}

std::pair<CategoricalParams, RecurrentState> classifier_posterior_step(
    const ModelParams& params, const Tensor& prev_w, const Tensor& label_summary,
    const RecurrentState& state) {
  expect_shape(prev_w, {1, params.dims.K}, "classifier_posterior_step prev_w");
  expect_shape(label_summary, {1, params.dims.n_classes},
               "classifier_posterior_step label_summary");
  RecurrentState next = lstm_step(params.tau_q, concat({prev_w, label_summary}, 1), state);
  CategoricalParams out{linear(next.hidden, params.tau_q_W, params.tau_q_b)};
  return {std::move(out), std::move(next)};
}

Tensor predict(const ModelParams& params, const Tensor& z_c, const Tensor& z_t,
               const Tensor& w) {
  const std::size_t K = params.dims.K, C = params.dims.n_classes;
  expect_cols(z_c, params.dims.d_zc, "predict z_c");
  expect_cols(z_t, params.dims.d_zt, "predict z_t");
  expect_shape(w, {1, K}, "predict w");
  if (z_c.rows() != z_t.rows()) {
    throw std::invalid_argument("predict: z_c and z_t row counts differ");
  }
  const std::size_t n = z_c.rows();
  const Tensor all_heads = linear(concat({z_c, z_t}, 1), params.bank_W, params.bank_b);
  if (K == 1) return all_heads;
  const Tensor weights = repeat_rows(matmul(w, bank_expansion(K, C)), n);
  return matmul(all_heads * weights, bank_summation(K, C));
}

}  // namespace mists
