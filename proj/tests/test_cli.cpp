#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>
#include <json.hpp>

namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("bcae_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Runs the CLI with stdout and stderr captured to files; returns the exit code.
  int run(const std::string& args) {
    const std::string cmd = std::string("\"") + BCAE_CLI_PATH + "\" " + args + " >\"" + (dir_ / "stdout").string() +
                            "\" 2>\"" + (dir_ / "stderr").string() + "\"";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string out(const std::string& sub) const { return (dir_ / sub).string(); }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, TrainWritesCheckpointAndHistoryDeterministically) {
  const std::string flags = "--snr1-db 5 --snr2-db 30 --steps 200 --batch 100 --seed 4";
  ASSERT_EQ(run("train " + flags + " --out-dir \"" + out("a") + "\""), 0) << slurp(dir_ / "stderr");
  ASSERT_EQ(run("train " + flags + " --out-dir \"" + out("b") + "\""), 0);
  const auto a = slurp(dir_ / "a/model.ckpt");
  EXPECT_EQ(a.substr(0, 8), "bcae-v1\n");
  EXPECT_EQ(a, slurp(dir_ / "b/model.ckpt"));
  EXPECT_NE(a.find("train 4 200 100 0.001\n"), std::string::npos);
  EXPECT_EQ(slurp(dir_ / "a/history.csv").substr(0, 10), "step,loss\n");
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("train --snr1-db 30 --snr2-db 5 --steps 10 --out-dir \"" + out("x") + "\""), 2);
  EXPECT_NE(slurp(dir_ / "stderr").find("not degraded"), std::string::npos);
  EXPECT_EQ(run("train --no-such-flag"), 2);
  EXPECT_EQ(run("train --arch table9"), 2);
  EXPECT_EQ(run("train --steps 0 --out-dir \"" + out("x") + "\""), 2);
  EXPECT_EQ(run("reproduce fig9 --out-dir \"" + out("x") + "\""), 2);
  EXPECT_EQ(run(""), 2);
}

TEST_F(Cli, AnalyzeMissingOrCorruptCheckpointExitsOne) {
  EXPECT_EQ(run("analyze --model \"" + out("missing.ckpt") + "\" --out-dir \"" + out("r") + "\""), 1);
  std::ofstream(dir_ / "bad.ckpt") << "bcae-v1\narch 1 1\n";
  EXPECT_EQ(run("analyze --model \"" + out("bad.ckpt") + "\" --out-dir \"" + out("r") + "\""), 1);
}

TEST_F(Cli, AnalyzeWritesReportAndStableConstellation) {
  ASSERT_EQ(run("train --steps 300 --batch 100 --out-dir \"" + out("m") + "\""), 0);
  const std::string analyze = "analyze --model \"" + out("m/model.ckpt") + "\" --trials 10000 --out-dir ";
  ASSERT_EQ(run(analyze + "\"" + out("r1") + "\""), 0) << slurp(dir_ / "stderr");
  ASSERT_EQ(run(analyze + "\"" + out("r2") + "\""), 0);
  const auto j = nlohmann::json::parse(slurp(dir_ / "r1/report.json"));
  for (const char* k : {"p1", "p2", "ratio_db", "dc_offset"}) EXPECT_TRUE(j["power_split"].contains(k)) << k;
  EXPECT_TRUE(j.contains("gray_user2"));
  EXPECT_TRUE(j.contains("user1_separable"));
  EXPECT_EQ(j["ser"]["trials"], 10000);
  EXPECT_TRUE(j["ser"].contains("half_width_95"));
  EXPECT_EQ(j["config"]["steps"], 300);
  const auto csv = slurp(dir_ / "r1/constellation.csv");
  EXPECT_EQ(csv.substr(0, 8), "s1,s2,x\n");
  EXPECT_EQ(csv, slurp(dir_ / "r2/constellation.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "r1/constellation.svg"));
  EXPECT_EQ(slurp(dir_ / "r1/report.json"), slurp(dir_ / "r2/report.json"));
}

TEST_F(Cli, ConfigFileIsOverriddenByFlags) {
  std::ofstream(dir_ / "run.conf") << "steps=150\nbatch=100\nseed=9\nsnr1-db=0\nsnr2-db=20\n";
  ASSERT_EQ(run("--config \"" + out("run.conf") + "\" train --seed 5 --out-dir \"" + out("m") + "\""), 0)
      << slurp(dir_ / "stderr");
  const auto ckpt = slurp(dir_ / "m/model.ckpt");
  EXPECT_NE(ckpt.find("channel 0 20 1\n"), std::string::npos);
  EXPECT_NE(ckpt.find("train 5 150 100 0.001\n"), std::string::npos);
}

TEST_F(Cli, SweepWritesOneRowPerPoint) {
  ASSERT_EQ(run("sweep --snr1-db 10 --snr2-from 10 --snr2-to 30 --snr2-step 5 --repeats 1 --steps 100 --batch 100 "
                "--out-dir \"" +
                out("s") + "\""),
            0)
      << slurp(dir_ / "stderr");
  std::ifstream in(dir_ / "s/sweep.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "snr2_db,median_user1_fraction,median_ratio_db,seeds,status");
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  EXPECT_EQ(rows, 5);
}

TEST_F(Cli, SerBaselineModeAndUsageErrors) {
  ASSERT_EQ(run("ser --baseline-fraction 0.8 --snr1-db 5 --snr2-db 30 --trials 20000 --out-dir \"" + out("b") + "\""),
            0)
      << slurp(dir_ / "stderr");
  const auto j = nlohmann::json::parse(slurp(dir_ / "b/ser.json"));
  EXPECT_EQ(j["ser"]["trials"], 20000);
  EXPECT_TRUE(j.contains("oracle"));
  EXPECT_EQ(run("ser --baseline-fraction 1.5 --out-dir \"" + out("b") + "\""), 2);
  EXPECT_EQ(run("ser --out-dir \"" + out("b") + "\""), 2);
}
