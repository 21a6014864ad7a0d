#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mists/config.hpp"
#include "mists/distributions.hpp"
#include "mists/tensor.hpp"

namespace mists {

/// Every size needed to build a ModelParams; echoed in checkpoints.
struct ModelDims {
  std::size_t input_dim = 2;
  std::size_t n_classes = 2;
  std::size_t d_zc = 8;
  std::size_t d_zt = 8;
  std::size_t hidden = 32;
  std::size_t K = 8;
  double logvar_clamp = 8.0;

  static ModelDims from_config(const TrainConfig& config, std::size_t input_dim,
                               std::size_t n_classes);
  bool operator==(const ModelDims&) const = default;
};

/// One-layer LSTM cell: gates = [x, h] W + b split into i, f, g, o.
struct LstmCell {
  Tensor W;  // (in + hidden) x 4 hidden
  Tensor b;  // 1 x 4 hidden
};

/// Linear head emitting a diagonal Gaussian.
struct GaussianHead {
  Tensor W_mu, b_mu, W_logvar, b_logvar;
};

struct RecurrentState {
  Tensor hidden;  // 1 x hidden
  Tensor cell;    // 1 x hidden

  static RecurrentState zeros(std::size_t width);
  RecurrentState detach() const { return {hidden.detach(), cell.detach()}; }
};

struct ModelParams {
  ModelDims dims;

  // Fixed input standardisation applied before the base encoder.
  Tensor input_shift;  // 1 x d
  Tensor input_scale;  // 1 x d, multiplies (x - shift)

  Tensor theta_W, theta_b;
  LstmCell kappa_c;
  GaussianHead kappa_head;
  LstmCell pi_q, pi_p;
  GaussianHead pi_q_head, pi_p_head;
  Tensor dec_W1, dec_b1, dec_W2, dec_b2;
  LstmCell tau_p, tau_q;
  Tensor tau_p_W, tau_p_b, tau_q_W, tau_q_b;
  Tensor bank_W;  // (d_zc + d_zt) x (K * C); head k owns columns [k C, (k + 1) C)
  Tensor bank_b;  // 1 x (K * C)

  /// Every tensor in a fixed order, with dotted names.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
  /// Trainable subset of `named()` (everything except the input standardisation).
  std::vector<Tensor> trainable() const;

  /// Deep copy with fresh leaves that keep the requires-grad flags.
  ModelParams clone() const;
  /// Same structure with the trainable tensors replaced, in `trainable()` order.
  ModelParams with_trainable(std::span<const Tensor> tensors) const;
};

/// Weights uniform in +-1/sqrt(fan_in), biases zero, identity standardisation.
ModelParams init_params(const ModelDims& dims, std::uint64_t seed);

/// tanh((X - shift) * scale W + b): n x hidden.
Tensor encode_base(const ModelParams& params, const Tensor& X);

/// kappa_c on each row as a length-1 sequence from the zero state.
GaussianParams infer_static(const ModelParams& params, const Tensor& H);

/// Mean-pools H_t, concatenates prev_z and advances pi_q.
std::pair<GaussianParams, RecurrentState> infer_dynamic_step(
    const ModelParams& params, const Tensor& H_t, const Tensor& prev_z,
    const RecurrentState& state);

/// pi_p fed [0; prev_z] so its input matches pi_q's layout.
std::pair<GaussianParams, RecurrentState> prior_dynamic_step(
    const ModelParams& params, const Tensor& prev_z, const RecurrentState& state);

/// Rows of z_c and z_t (n x d_zc, n x d_zt) to reconstructions n x d.
Tensor decode(const ModelParams& params, const Tensor& z_c, const Tensor& z_t);

std::pair<CategoricalParams, RecurrentState> classifier_prior_step(
    const ModelParams& params, const Tensor& prev_w, const RecurrentState& state);

std::pair<CategoricalParams, RecurrentState> classifier_posterior_step(
    const ModelParams& params, const Tensor& prev_w, const Tensor& label_summary,
    const RecurrentState& state);

/// Sum_k w_k head_k([z_c, z_t]); w is 1 x K, latents are per-row.
Tensor predict(const ModelParams& params, const Tensor& z_c, const Tensor& z_t,
               const Tensor& w);

/// Runs one LSTM step; exposed for tests.
RecurrentState lstm_step(const LstmCell& cell, const Tensor& x,
                         const RecurrentState& state);

/// Repeats a 1 x m row n times.
Tensor repeat_rows(const Tensor& row, std::size_t n);

}  // namespace mists
