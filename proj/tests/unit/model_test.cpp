#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "mists/model.hpp"
#include "support.hpp"

namespace mists {
namespace {

ModelDims tiny_dims() {
  return ModelDims::from_config(test::tiny_config(), 2, 2);
}

TEST(Init, WeightsRespectFanInBoundsAndBiasesStartAtZero) {
  const ModelParams p = init_params(tiny_dims(), 0);
  for (const auto& [name, t] : p.named()) {
    if (name.starts_with("input.")) continue;
    if (t->rows() == 1) {
      for (double v : t->values()) EXPECT_EQ(v, 0.0) << name;
    } else {
      const double bound = 1.0 / std::sqrt(static_cast<double>(t->rows()));
      for (double v : t->values()) EXPECT_LE(std::abs(v), bound) << name;
    }
  }
}

TEST(Init, SameSeedSameWeightsDifferentSeedDifferent) {
  const ModelParams a = init_params(tiny_dims(), 4);
  const ModelParams b = init_params(tiny_dims(), 4);
  const ModelParams c = init_params(tiny_dims(), 5);
  const auto na = a.named(), nb = b.named(), nc = c.named();
  bool any_difference = false;
  for (std::size_t i = 0; i < na.size(); ++i) {
    const auto va = na[i].second->values(), vb = nb[i].second->values(),
               vc = nc[i].second->values();
    EXPECT_TRUE(std::equal(va.begin(), va.end(), vb.begin())) << na[i].first;
    any_difference = any_difference || !std::equal(va.begin(), va.end(), vc.begin());
  }
  EXPECT_TRUE(any_difference);
  ModelDims bad = tiny_dims();
  bad.n_classes = 1;
  EXPECT_THROW(init_params(bad, 0), std::invalid_argument);
}

TEST(Init, InputStandardisationIsNotTrainable) {
  const ModelParams p = init_params(tiny_dims(), 0);
  EXPECT_EQ(p.trainable().size() + 2, p.named().size());
  EXPECT_THROW(p.with_trainable(std::span<const Tensor>{}), std::invalid_argument);
}

TEST(Forward, ShapesOfEveryModule) {
  const ModelDims dims = tiny_dims();
  const ModelParams p = init_params(dims, 1);
  std::mt19937_64 rng(1);
  const Tensor X = test::random_tensor(rng, {5, 2});
  const Tensor H = encode_base(p, X);
  EXPECT_EQ(H.shape(), (Shape{5, dims.hidden}));
  EXPECT_EQ(infer_static(p, H).mu.shape(), (Shape{5, dims.d_zc}));
  const RecurrentState s0 = RecurrentState::zeros(dims.hidden);
  const auto [zt_post, s1] = infer_dynamic_step(p, H, Tensor::zeros({1, dims.d_zt}), s0);
  EXPECT_EQ(zt_post.mu.shape(), (Shape{1, dims.d_zt}));
  EXPECT_EQ(s1.hidden.shape(), (Shape{1, dims.hidden}));
  const auto [zt_prior, s2] = prior_dynamic_step(p, zt_post.mu, s0);
  EXPECT_EQ(zt_prior.logvar.shape(), (Shape{1, dims.d_zt}));
  const Tensor zc = test::random_tensor(rng, {5, dims.d_zc});
  const Tensor zt = repeat_rows(zt_post.mu, 5);
  EXPECT_EQ(decode(p, zc, zt).shape(), (Shape{5, 2}));
  const auto [w_prior, s3] = classifier_prior_step(p, Tensor::zeros({1, dims.K}), s0);
  EXPECT_EQ(w_prior.logits.shape(), (Shape{1, dims.K}));
  const auto [w_post, s4] = classifier_posterior_step(p, Tensor::zeros({1, dims.K}),
                                                      Tensor::row({0.5, 0.5}), s0);
  EXPECT_EQ(w_post.logits.shape(), (Shape{1, dims.K}));
  EXPECT_EQ(predict(p, zc, zt, Tensor::row({1.0, 0.0})).shape(), (Shape{5, 2}));
}

TEST(Forward, LogVarianceIsSoftClamped) {
  ModelParams p = init_params(tiny_dims(), 2);
  for (double& v : p.kappa_head.b_logvar.mutable_values()) v = 20.0;
  const GaussianParams q = infer_static(p, Tensor::zeros({1, p.dims.hidden}));
  for (double v : q.logvar.values()) {
    EXPECT_LT(v, p.dims.logvar_clamp);
    EXPECT_NEAR(v, 8.0 * std::tanh(20.0 / 8.0), 1e-12);
  }
}

// Head k of the bank applied directly: [z_c, z_t] W_k + b_k.
Tensor head_logits(const ModelParams& p, const Tensor& zc, const Tensor& zt, std::size_t k) {
  const std::size_t C = p.dims.n_classes;
  const Tensor W = slice(p.bank_W, 1, k * C, (k + 1) * C);
  const Tensor b = slice(p.bank_b, 1, k * C, (k + 1) * C);
  return add_row(matmul(concat({zc, zt}, 1), W), b);
}

TEST(Predict, IsLinearInTheMixtureWeights) {
  ModelParams p = init_params(tiny_dims(), 3);
  std::mt19937_64 rng(3);
  p.bank_b = test::random_tensor(rng, p.bank_b.shape());
  const Tensor zc = test::random_tensor(rng, {4, 2}), zt = test::random_tensor(rng, {4, 2});
  const Tensor h0 = head_logits(p, zc, zt, 0), h1 = head_logits(p, zc, zt, 1);
  const Tensor one = predict(p, zc, zt, Tensor::row({0.0, 1.0}));
  const Tensor mixed = predict(p, zc, zt, Tensor::row({0.3, 0.7}));
  for (std::size_t i = 0; i < one.numel(); ++i) {
    EXPECT_NEAR(one[i], h1[i], 1e-14);
    EXPECT_NEAR(mixed[i], 0.3 * h0[i] + 0.7 * h1[i], 1e-14);
  }
}

TEST(Predict, SingleHeadBankAndZeroWeights) {
  ModelDims dims = tiny_dims();
  dims.K = 1;
  ModelParams p = init_params(dims, 4);
  std::mt19937_64 rng(4);
  const Tensor zc = test::random_tensor(rng, {3, 2}), zt = test::random_tensor(rng, {3, 2});
  const Tensor got = predict(p, zc, zt, Tensor::row({1.0}));
  const Tensor want = head_logits(p, zc, zt, 0);
  for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got[i], want[i], 1e-14);
  p.bank_W = Tensor::zeros(p.bank_W.shape());
  const Tensor zero = predict(p, zc, zt, Tensor::row({1.0}));
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, ZeroWeightsGiveHalfGates) {
  // All gates 0.5, candidate 0: c = 0.5 c_prev, h = 0.5 tanh(c).
  const LstmCell cell{Tensor::zeros({3, 8}), Tensor::zeros({1, 8})};
  const RecurrentState prev{Tensor::zeros({1, 2}), Tensor::row({1.0, -2.0})};
  const RecurrentState next = lstm_step(cell, Tensor::row({0.3}), prev);
  EXPECT_DOUBLE_EQ(next.cell[0], 0.5);
  EXPECT_DOUBLE_EQ(next.cell[1], -1.0);
  EXPECT_NEAR(next.hidden[0], 0.5 * std::tanh(0.5), 1e-15);
  EXPECT_NEAR(next.hidden[1], 0.5 * std::tanh(-1.0), 1e-15);
}

TEST(Params, CloneIsIndependent) {
  const ModelParams p = init_params(tiny_dims(), 5);
  ModelParams c = p.clone();
  c.theta_W.mutable_values()[0] += 1.0;
  EXPECT_NE(c.theta_W[0], p.theta_W[0]);
  EXPECT_TRUE(c.theta_W.requires_grad());
}

TEST(RepeatRows, CopiesTheRow) {
  const Tensor r = repeat_rows(Tensor::row({1.0, 2.0}), 3);
  EXPECT_EQ(r.shape(), (Shape{3, 2}));
  EXPECT_DOUBLE_EQ(r.at(2, 1), 2.0);
}

}  // namespace
}  // namespace mists
