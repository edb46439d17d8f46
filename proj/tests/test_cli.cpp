#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <gtest/gtest.h>
#include <json.hpp>

#include "rebal/dataset_io.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
};

CliRun cli(const std::string& args) {
  const fs::path log = fs::temp_directory_path() / "rebal_cli_test_output.txt";
  const std::string cmd = std::string(REBAL_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream is(log);
  std::stringstream ss;
  ss << is.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("rebal_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, GenWritesRequestedGroupCounts) {
  const CliRun r = cli("gen --k 2 --rho 0.7,0.3 --n 1000 --seed 7 --out " + path("d.jsonl"));
  ASSERT_EQ(r.code, 0) << r.out;
  const rebal::LabeledDataset ds = rebal::load_dataset(path("d.jsonl"));
  EXPECT_EQ(ds.group_counts(), (std::vector<std::size_t>{700, 300}));
  EXPECT_NE(r.out.find("700"), std::string::npos);
}

TEST_F(CliTest, GenRejectsProportionsNotSummingToOne) {
  const CliRun r = cli("gen --k 2 --rho 0.7,0.4 --n 100 --out " + path("d.jsonl"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("sum to 1"), std::string::npos) << r.out;
  EXPECT_FALSE(fs::exists(path("d.jsonl")));
}

TEST_F(CliTest, GenIsByteIdenticalAcrossRuns) {
  ASSERT_EQ(cli("gen --k 3 --rho 0.5,0.3,0.2 --n 500 --seed 3 --out " + path("a.jsonl")).code, 0);
  ASSERT_EQ(cli("gen --k 3 --rho 0.5,0.3,0.2 --n 500 --seed 3 --out " + path("b.jsonl")).code, 0);
  EXPECT_EQ(slurp(path("a.jsonl")), slurp(path("b.jsonl")));
}

TEST_F(CliTest, FlagsOverrideConfigFile) {
  std::ofstream(path("gen.cfg")) << "k = 2\nrho = 0.5, 0.5\nn = 100\nseed = 1\n";
  ASSERT_EQ(cli("gen --config " + path("gen.cfg") + " --n 40 --out " + path("d.jsonl")).code, 0);
  const rebal::LabeledDataset ds = rebal::load_dataset(path("d.jsonl"));
  EXPECT_EQ(ds.group_counts(), (std::vector<std::size_t>{20, 20}));
}

TEST_F(CliTest, RebalanceEqualGivesUniformAlpha) {
  ASSERT_EQ(cli("gen --k 3 --rho 0.6,0.3,0.1 --n 300 --seed 2 --out " + path("d.jsonl")).code, 0);
  const std::string before = slurp(path("d.jsonl"));
  const CliRun r = cli("rebalance --strategy equal --data " + path("d.jsonl") + " --out " + path("w.jsonl"));
  ASSERT_EQ(r.code, 0) << r.out;
  std::ifstream is(path("w.jsonl"));
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(nlohmann::json::parse(line)["strategy"], "equal");
  std::getline(is, line);
  const auto alpha = nlohmann::json::parse(line)["alpha"].get<std::vector<double>>();
  ASSERT_EQ(alpha.size(), 3u);
  for (double a : alpha) EXPECT_DOUBLE_EQ(a, 1.0 / 3.0);
  EXPECT_EQ(slurp(path("d.jsonl")), before);
}

TEST_F(CliTest, RebalanceMinmaxMetaWritesReferencesAndConvergence) {
  ASSERT_EQ(cli("gen --k 2 --rho 0.7,0.3 --theta 1,-1 --n 400 --seed 2 --out " + path("d.jsonl")).code, 0);
  std::ofstream(path("r.cfg")) << "lr = 0.5\nepochs = 200\nmeta_rounds = 30\nouter_rounds = 200\n"
                                  "inner_epochs = 5\nalpha_lr = 0.5\nwarmup_epochs = 0\ndelta_tol = 1e-3\n";
  const CliRun r = cli("rebalance --strategy minmax-meta --policy linear --config " + path("r.cfg") + " --data " +
                    path("d.jsonl") + " --out " + path("w.jsonl") + " --refs-out " + path("refs.jsonl") +
                    " --report " + path("report.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  std::ifstream ws(path("w.jsonl"));
  std::string line;
  std::getline(ws, line);
  const auto h = nlohmann::json::parse(line);
  EXPECT_EQ(h["refs_source"], "meta-learned");
  EXPECT_TRUE(h.contains("converged"));
  std::getline(ws, line);
  EXPECT_EQ(nlohmann::json::parse(line)["alpha"].size(), 2u);
  std::ifstream rs(path("refs.jsonl"));
  std::getline(rs, line);
  EXPECT_EQ(nlohmann::json::parse(line)["k"], 2);
  std::getline(rs, line);
  EXPECT_TRUE(nlohmann::json::parse(line).contains("l_min"));
  EXPECT_NE(slurp(path("report.csv")).find("alpha_0"), std::string::npos);
}

TEST_F(CliTest, RebalanceUpsampleWritesAugmentedDataset) {
  ASSERT_EQ(cli("gen --k 2 --rho 0.8,0.2 --theta 1,-1 --n 200 --seed 2 --out " + path("d.jsonl")).code, 0);
  std::ofstream(path("u.cfg")) << "lr = 0.5\nepochs = 50\n";
  const CliRun r = cli("rebalance --strategy upsample --policy linear --config " + path("u.cfg") + " --data " +
                    path("d.jsonl") + " --out " + path("w.jsonl") + " --data-out " + path("up.jsonl"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(rebal::load_dataset(path("up.jsonl")).size(), 300u);
}

TEST_F(CliTest, RebalanceUsageErrors) {
  ASSERT_EQ(cli("gen --k 2 --rho 0.5,0.5 --n 50 --out " + path("d.jsonl")).code, 0);
  const CliRun unknown = cli("rebalance --strategy nosuch --data " + path("d.jsonl"));
  EXPECT_EQ(unknown.code, 2);
  for (const char* n : {"equal", "minmax-zero", "minmax-refpolicy", "minmax-meta", "upsample"})
    EXPECT_NE(unknown.out.find(n), std::string::npos) << n;
  EXPECT_EQ(cli("rebalance --strategy equal --data " + path("missing.jsonl")).code, 2);
  EXPECT_EQ(cli("rebalance --strategy equal").code, 2);
  EXPECT_EQ(cli("--bogus").code, 2);
  std::ofstream(path("bad.cfg")) << "ascent = sideways\n";
  EXPECT_EQ(cli("rebalance --strategy equal --config " + path("bad.cfg") + " --data " + path("d.jsonl")).code, 2);
}

TEST_F(CliTest, ReproUnknownSuiteIsUsageError) {
  const CliRun r = cli("repro nosuch");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("prop1"), std::string::npos);
}

TEST_F(CliTest, ReproProp1Passes) {
  const CliRun r = cli("repro prop1");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("PASS criterion 1"), std::string::npos);
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST_F(CliTest, ReproMetagradPrintsTable) {
  const CliRun r = cli("repro metagrad");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("mlp-param-grad"), std::string::npos);
}

TEST_F(CliTest, ReproMinmaxPasses) { EXPECT_EQ(cli("repro minmax").code, 0); }
