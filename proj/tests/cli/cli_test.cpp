#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "mists_cli/cli.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "mists");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = mists::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mists_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(path("tiny.cfg")) << "d_zc = 2\nd_zt = 2\nhidden = 4\nK = 2\n"
                                       "epochs = 2\nbatch_size = 8\n";
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void make_data() {
    ASSERT_EQ(run({"-q", "gen", "circle", "--domains", "12", "--n", "10", "--out",
                   path("data.csv")}).code, 0);
  }

  fs::path dir_;
};

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({}).code, mists::cli::kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, mists::cli::kExitUsage);
  EXPECT_EQ(run({"gen", "circle"}).code, mists::cli::kExitUsage);
  EXPECT_EQ(run({"gen", "spiral", "--out", path("x.csv")}).code, mists::cli::kExitUsage);
}

TEST_F(Cli, GenWritesAStreamAndAManifest) {
  make_data();
  const std::string csv = slurp(path("data.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "domain,y,x0,x1");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 12 * 10);
  const json m = json::parse(slurp(path("data.csv.manifest.json")));
  EXPECT_EQ(m["command"], "gen");
  EXPECT_EQ(m["status"], "complete");
  EXPECT_TRUE(m["wall_seconds"].is_number());
  EXPECT_EQ(m["dataset"]["name"], "circle");
}

TEST_F(Cli, TrainThenEvalProducesMetrics) {
  make_data();
  ASSERT_EQ(run({"-q", "train", "--data", path("data.csv"), "--config", path("tiny.cfg"),
                 "--out", path("run")}).code, 0);
  EXPECT_TRUE(fs::exists(path("run/checkpoint.txt")));
  EXPECT_TRUE(fs::exists(path("run/history.csv")));
  EXPECT_EQ(json::parse(slurp(path("run/manifest.json")))["status"], "complete");

  ASSERT_EQ(run({"-q", "eval", "--checkpoint", path("run/checkpoint.txt"), "--data",
                 path("data.csv"), "--out", path("metrics.json")}).code, 0);
  const json m = json::parse(slurp(path("metrics.json")));
  EXPECT_EQ(m["per_domain"].size(), 4u);
  EXPECT_EQ(m["validation"]["per_domain"].size(), 2u);
  EXPECT_GE(m["average"].get<double>(), 0.0);
  EXPECT_LE(m["average"].get<double>(), 1.0);
  EXPECT_EQ(m["model"], "mists");
}

TEST_F(Cli, ErmTrainAndBoundary) {
  make_data();
  ASSERT_EQ(run({"-q", "train", "--data", path("data.csv"), "--config", path("tiny.cfg"),
                 "--model", "erm", "--out", path("erm")}).code, 0);
  ASSERT_EQ(run({"-q", "plot-boundary", "--checkpoint", path("erm/checkpoint.txt"), "--data",
                 path("data.csv"), "--resolution", "5", "--out", path("grid.csv")}).code, 0);
  const std::string grid = slurp(path("grid.csv"));
  EXPECT_EQ(std::count(grid.begin(), grid.end(), '\n'), 1 + 12 * 25);
}

TEST_F(Cli, CorruptCsvReportsTheLine) {
  std::ofstream(path("bad.csv")) << "domain,y,x0,x1\n1,0,0.1,0.2\n1,1,zz,0.3\n";
  const Outcome o = run({"train", "--data", path("bad.csv"), "--out", path("run")});
  EXPECT_EQ(o.code, mists::cli::kExitUsage);
  EXPECT_NE(o.err.find("line 3"), std::string::npos) << o.err;
}

TEST_F(Cli, UnknownConfigKeyIsAUsageError) {
  make_data();
  std::ofstream(path("bad.cfg")) << "learning_rate = 0.1\n";
  const Outcome o = run({"train", "--data", path("data.csv"), "--config", path("bad.cfg"),
                         "--out", path("run")});
  EXPECT_EQ(o.code, mists::cli::kExitUsage);
  EXPECT_NE(o.err.find("learning_rate"), std::string::npos);
}

TEST_F(Cli, UnknownAblationVariantIsAUsageError) {
  make_data();
  const Outcome o = run({"ablate", "--data", path("data.csv"), "--variants", "full,ZZ",
                         "--out", path("ablate.csv")});
  EXPECT_EQ(o.code, mists::cli::kExitUsage);
  EXPECT_NE(o.err.find("ZZ"), std::string::npos);
}

TEST_F(Cli, AblateWritesOneRowPerVariant) {
  make_data();
  ASSERT_EQ(run({"-q", "ablate", "--data", path("data.csv"), "--config", path("tiny.cfg"),
                 "--variants", "full,E", "--seeds", "0,1", "--out", path("ablate.csv")}).code,
            0);
  const std::string csv = slurp(path("ablate.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "variant,mean,std,seed_0,seed_1");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST_F(Cli, MissingCheckpointIsAUsageError) {
  make_data();
  EXPECT_EQ(run({"eval", "--checkpoint", path("nope.txt"), "--data", path("data.csv"),
                 "--out", path("m.json")}).code,
            mists::cli::kExitUsage);
}

TEST_F(Cli, GradcheckAndTheoryCheckReports) {
  const Outcome g = run({"gradcheck"});
  ASSERT_EQ(g.code, 0);
  const json gj = json::parse(g.out);
  EXPECT_TRUE(gj["success"].get<bool>());
  EXPECT_LT(gj["max_relative_error"].get<double>(), 1e-5);

  ASSERT_EQ(run({"theory-check", "--mu-t", "0", "--n", "10000", "--out",
                 path("theory.json")}).code, 0);
  const json tj = json::parse(slurp(path("theory.json")));
  EXPECT_FALSE(tj["success"].get<bool>());
  EXPECT_FALSE(tj["note"].get<std::string>().empty());
  EXPECT_LT(tj["identity_residual_max"].get<double>(), 1e-12);
}

}  // namespace
