#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <gtest/gtest.h>

#include "mists/datagen.hpp"

namespace mists {
namespace {

namespace fs = std::filesystem;

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("mists_datagen_" + name);
}

TEST(Circle, LabelsFollowTheUnitCircle) {
  const DomainStream s = generate_circle(30, 200, false, 0);
  ASSERT_EQ(s.size(), 30u);
  s.validate();
  int positives = 0, total = 0;
  for (const Domain& d : s.domains) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double x0 = d.X(static_cast<Eigen::Index>(i), 0);
      const double x1 = d.X(static_cast<Eigen::Index>(i), 1);
      EXPECT_EQ(d.y[i], x0 * x0 + x1 * x1 < 1.0 ? 1 : 0);
      positives += d.y[i];
      ++total;
    }
  }
  EXPECT_GT(positives, 0);
  EXPECT_LT(positives, total);
}

TEST(Circle, DomainCentresTravelAlongTheArc) {
  const DomainStream s = generate_circle(30, 400, false, 2);
  const Domain& first = s.domains.front();
  const Domain& last = s.domains.back();
  EXPECT_NEAR(first.X.col(0).mean(), 1.0, 0.05);
  EXPECT_NEAR(last.X.col(0).mean(), -1.0, 0.05);
  EXPECT_NEAR(last.X.col(1).mean(), 0.0, 0.05);
}

TEST(Sine, LabelsFollowTheCurve) {
  const DomainStream s = generate_sine(24, 100, std::nullopt, 0);
  ASSERT_EQ(s.size(), 24u);
  for (const Domain& d : s.domains) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      EXPECT_EQ(d.y[i], d.X(r, 1) > std::sin(d.X(r, 0)) ? 1 : 0);
    }
  }
}

TEST(Sine, ConceptShiftFlipsLabelsFromTheGivenDomain) {
  const DomainStream plain = generate_sine(24, 50, std::nullopt, 3);
  const DomainStream flipped = generate_sine(24, 50, 6, 3);
  for (std::size_t k = 0; k < plain.size(); ++k) {
    const Domain& a = plain.domains[k];
    const Domain& b = flipped.domains[k];
    ASSERT_TRUE(a.X == b.X);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(b.y[i], b.index >= 6 ? 1 - a.y[i] : a.y[i]);
    }
  }
  EXPECT_THROW(generate_sine(24, 50, 25, 0), std::invalid_argument);
}

TEST(Scm, SampleMeansMatchTheLatentMeans) {
  const ScmParams p = ScmParams::scalar(1.0, 0.5, -2.0, 1.0);
  const int n = 10000;
  const DomainStream s = generate_scm(p, 1, n, 0);
  const Domain& d = s.domains.front();
  double m0 = 0.0, m1 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double y = d.y[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
    m0 += y * d.X(i, 0);
    m1 += y * d.X(i, 1);
  }
  m0 /= n;
  m1 /= n;
  EXPECT_NEAR(m0, 1.0, 4.0 * 0.5 / std::sqrt(n));
  EXPECT_NEAR(m1, -2.0, 4.0 * 1.0 / std::sqrt(n));
}

TEST(Scm, ClassesAreBalanced) {
  const DomainStream s = generate_scm(ScmParams::scalar(1, 1, 1, 1), 3, 100, 1);
  for (const Domain& d : s.domains) {
    int pos = 0;
    for (int y : d.y) pos += y;
    EXPECT_EQ(pos, 50);
  }
  EXPECT_THROW(generate_scm(ScmParams::scalar(1, 1, 1, 1), 1, 7, 0), std::invalid_argument);
}

TEST(Scm, DriftMapIsIterated) {
  ScmParams p = ScmParams::scalar(1.0, 1.0, 1.0, 1.0);
  p.drift_matrix = Eigen::MatrixXd::Constant(1, 1, 0.5);
  p.drift_offset = Eigen::VectorXd::Constant(1, 1.0);
  // 1 -> 1.5 -> 1.75 -> 1.875
  EXPECT_DOUBLE_EQ(scm_dynamic_mean(p, 1)(0), 1.0);
  EXPECT_DOUBLE_EQ(scm_dynamic_mean(p, 4)(0), 1.875);
  const ScmParams drift = ScmParams::drifting();
  EXPECT_NEAR(scm_dynamic_mean(drift, 7)(0), 0.0, 1e-12);
  EXPECT_NEAR(scm_dynamic_mean(drift, 24)(0), -1.5 + 0.25 * 23, 1e-12);
}

TEST(Scm, RejectsSingularMixAndBadShapes) {
  ScmParams p = ScmParams::scalar(1.0, 1.0, 1.0, 1.0);
  p.mix << 1.0, 2.0, 2.0, 4.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  ScmParams q = ScmParams::scalar(1.0, 1.0, 1.0, 1.0);
  q.sigma_t = 0.0;
  EXPECT_THROW(generate_scm(q, 2, 10, 0), std::invalid_argument);
}

TEST(Scm, MixedCovarianceMatchesRotation) {
  ScmParams p = ScmParams::scalar(0.0, 1.0, 0.0, 2.0);
  const double a = std::numbers::pi / 6.0;
  p.mix.resize(2, 2);
  p.mix << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  const DomainStream s = generate_scm(p, 1, 10000, 5);
  const Matrix& X = s.domains.front().X;
  const Eigen::MatrixXd centred = X.rowwise() - X.colwise().mean();
  const Eigen::MatrixXd cov = centred.transpose() * centred / (X.rows() - 1.0);
  const Eigen::MatrixXd expected =
      p.mix * Eigen::Vector2d(1.0, 4.0).asDiagonal() * p.mix.transpose();
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      EXPECT_NEAR(cov(i, j), expected(i, j), 0.1 * std::abs(expected(i, j)) + 0.02);
    }
  }
}

TEST(Split, DefaultRatiosGiveContiguousParts) {
  const DomainStream s = generate_circle(30, 10, false, 0);
  const StreamSplit sp = split_stream(s);
  EXPECT_EQ(sp.source.size(), 15u);
  EXPECT_EQ(sp.intermediate.size(), 5u);
  EXPECT_EQ(sp.target.size(), 10u);
  EXPECT_EQ(sp.target.domains.front().index, 21);
  EXPECT_TRUE(join_streams(join_streams(sp.source, sp.intermediate), sp.target).same_data(s));

  const StreamSplit sp24 = split_stream(generate_sine(24, 10, std::nullopt, 0));
  EXPECT_EQ(sp24.source.size(), 12u);
  EXPECT_EQ(sp24.intermediate.size(), 4u);
  EXPECT_EQ(sp24.target.size(), 8u);
}

TEST(Split, RejectsEmptyPartsAndBadRatios) {
  const DomainStream s = generate_circle(30, 10, false, 0);
  EXPECT_THROW(split_stream(s, {1.0, 0.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(split_stream(s, {0.5, 0.5, 0.5}), std::invalid_argument);
}

TEST(Csv, RoundTripIsExact) {
  const DomainStream s = generate_scm(ScmParams::drifting(), 4, 10, 9);
  const fs::path path = temp_file("roundtrip.csv");
  save_stream(s, path);
  const DomainStream back = load_stream(path);
  EXPECT_TRUE(back.same_data(s));
  fs::remove(path);
}

std::string load_error(const std::string& text) {
  const fs::path path = temp_file("bad.csv");
  {
    std::ofstream out(path);
    out << text;
  }
  try {
    load_stream(path);
  } catch (const DataError& e) {
    fs::remove(path);
    return e.what();
  }
  fs::remove(path);
  return "";
}

TEST(Csv, ReportsMalformedInputWithLineNumbers) {
  EXPECT_NE(load_error("domain,label,x0\n1,0,0.5\n").find("line 1"), std::string::npos);
  EXPECT_NE(load_error("domain,y,x0,x1\n1,0,0.5,1\n1,1,abc,2\n").find("line 3"),
            std::string::npos);
  EXPECT_NE(load_error("domain,y,x0,x1\n1,0,0.5\n").find("line 2"), std::string::npos);
  EXPECT_NE(load_error("domain,y,x0,x1\n1,0,0.5,1\n3,1,1,2\n").find("consecutive"),
            std::string::npos);
  EXPECT_NE(load_error("domain,y,x0,x1\n1,0,nan,1\n").find("line 2"), std::string::npos);
  EXPECT_NE(load_error("").find("line 1"), std::string::npos);
}

TEST(Csv, MissingFileIsADataError) {
  EXPECT_THROW(load_stream(temp_file("does_not_exist.csv")), DataError);
}

TEST(Tensors, StripLabelsKeepsFeatures) {
  const DomainStream s = generate_circle(3, 4, false, 0);
  const auto u = strip_labels(s);
  ASSERT_EQ(u.size(), 3u);
  EXPECT_TRUE(u[1].X == s.domains[1].X);
  const Tensor t = to_tensor(s.domains[0].X);
  EXPECT_DOUBLE_EQ(t.at(3, 1), s.domains[0].X(3, 1));
}

}  // namespace
}  // namespace mists
