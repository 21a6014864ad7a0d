#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "mists/eval.hpp"
#include "mists/training.hpp"
#include "support.hpp"

namespace mists {
namespace {

DomainStream labelled(int index, std::vector<int> y) {
  DomainStream s;
  s.feature_dim = 1;
  Domain d{index, Matrix::Zero(static_cast<Eigen::Index>(y.size()), 1), std::move(y)};
  s.domains.push_back(std::move(d));
  return s;
}

TEST(Evaluate, RandomLogitsScoreNearChance) {
  std::mt19937_64 rng(0);
  const std::size_t n = 10000;
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(rng() % 2);
  const DomainStream s = labelled(1, y);
  const Predictions p = {{1, test::random_tensor(rng, {n, 2})}};
  EXPECT_NEAR(evaluate(p, s).average, 0.5, 0.02);
}

TEST(Evaluate, AverageIsUnweightedOverDomains) {
  DomainStream s = labelled(1, {0, 1});
  s.domains.push_back(labelled(2, {0, 0, 1, 1}).domains.front());
  const Predictions p = {
      {1, Tensor({2, 2}, {1, 0, 0, 1})},
      {2, Tensor({4, 2}, {1, 0, 1, 0, 1, 0, 1, 0})},
  };
  const Metrics m = evaluate(p, s);
  EXPECT_DOUBLE_EQ(m.per_domain.at(1), 1.0);
  EXPECT_DOUBLE_EQ(m.per_domain.at(2), 0.5);
  EXPECT_DOUBLE_EQ(m.average, 0.75);
  EXPECT_EQ(m.n.at(2), 4u);
  const std::string json = m.to_json({{"model", "\"erm\""}});
  EXPECT_NE(json.find("\"average\""), std::string::npos);
  EXPECT_NE(json.find("\"model\""), std::string::npos);
}

TEST(Evaluate, RejectsMisalignedPredictions) {
  const DomainStream s = labelled(3, {0, 1});
  EXPECT_THROW(evaluate({{4, Tensor::zeros({2, 2})}}, s), std::invalid_argument);
  EXPECT_THROW(evaluate({{3, Tensor::zeros({3, 2})}}, s), std::invalid_argument);
  EXPECT_THROW(evaluate({}, s), std::invalid_argument);
}

TEST(Boundary, GridHasResolutionSquaredRowsPerDomain) {
  const DomainPredictFn sign = [](int, const Tensor& X) {
    std::vector<double> v;
    for (std::size_t i = 0; i < X.rows(); ++i) {
      v.push_back(0.0);
      v.push_back(X.at(i, 0));
    }
    return Tensor({X.rows(), 2}, v);
  };
  const std::vector<int> domains = {5, 6, 7};
  const auto rows = export_decision_boundary(sign, domains, {-1.0, 1.0}, {0.0, 2.0}, 11);
  ASSERT_EQ(rows.size(), 3u * 11u * 11u);
  EXPECT_EQ(rows.front().t, 5);
  EXPECT_DOUBLE_EQ(rows.front().x0, -1.0);
  EXPECT_DOUBLE_EQ(rows[1].x0, -0.8);
  EXPECT_DOUBLE_EQ(rows[11].x1, 0.2);
  EXPECT_EQ(rows.back().t, 7);
  EXPECT_EQ(rows.back().pred, 1);
  EXPECT_EQ(rows.front().pred, 0);
  for (const BoundaryRow& r : rows) EXPECT_GE(r.score, 0.5);
  const std::string csv = boundary_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,x0,x1,pred,score");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 3 * 121);
  EXPECT_THROW(export_decision_boundary(sign, domains, {0, 1}, {0, 1}, 1),
               std::invalid_argument);
}

TEST(Rollout, LatentsCoverSourceAndTargets) {
  const TrainConfig c = test::tiny_config();
  const DomainStream s = test::separable_stream(6, 8, 3);
  const StreamSplit split = split_stream(s);
  const ModelParams p = train(split.source, c).params;
  const auto targets = strip_labels(join_streams(split.intermediate, split.target));
  const auto latents = infer_domain_latents(p, split.source, targets);
  ASSERT_EQ(latents.size(), split.source.size() + targets.size());
  EXPECT_FALSE(latents.front().rolled_out);
  EXPECT_TRUE(latents.back().rolled_out);
  EXPECT_EQ(latents.back().index, 6);
  EXPECT_EQ(latents[3].index, 4);
  double w_total = 0.0;
  for (double v : latents.back().w.values()) w_total += v;
  EXPECT_DOUBLE_EQ(w_total, 1.0);
  const Predictions preds = rollout_predict(p, split.source, targets);
  ASSERT_EQ(preds.size(), targets.size());
  EXPECT_EQ(preds.front().logits.shape(), (Shape{8, 2}));
}

TEST(Ablation, FullVariantEqualsTrainThenRollout) {
  TrainConfig c = test::tiny_config();
  const StreamSplit split = split_stream(test::separable_stream(6, 8, 4));
  const std::vector<std::uint64_t> seeds = {0, 1};
  const AblationResult r = run_ablation(split, c, AblationSpec{}, seeds);
  ASSERT_EQ(r.per_seed.size(), 2u);
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    c.seed = seeds[k];
    const ModelParams p = train(split.source, c).params;
    EXPECT_EQ(r.per_seed[k].average, evaluate_rollout(p, split).target.average);
  }
  const double a = r.per_seed[0].average, b = r.per_seed[1].average;
  EXPECT_DOUBLE_EQ(r.mean, 0.5 * (a + b));
  EXPECT_NEAR(r.stddev, std::abs(a - b) / std::sqrt(2.0), 1e-12);
}

TEST(Erm, LearnsASeparableStream) {
  TrainConfig c = test::tiny_config();
  c.epochs = 60;
  c.lr = 1e-2;
  const ErmParams p = train_erm_baseline(test::separable_stream(4, 40, 5), c);
  const DomainStream held_out = test::separable_stream(3, 40, 6);
  const Metrics m = evaluate(predict_erm_domains(p, strip_labels(held_out)), held_out);
  EXPECT_GT(m.average, 0.95);
}

}  // namespace
}  // namespace mists
