// Drives the built executable through the shell.

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string output;  // stdout and stderr
};

Outcome run(const std::string& args) {
  const std::string cmd = std::string(SPINHOVER_CLI) + " " + args + " 2>&1";
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return o;
  std::array<char, 4096> buf;
  while (std::fgets(buf.data(), buf.size(), pipe)) o.output += buf.data();
  const int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("spinhover_cli_" + std::string(::testing::UnitTest::GetInstance()
                                               ->current_test_info()
                                               ->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }
  fs::path out() const { return dir_ / "out"; }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, SimulateWritesFullLog) {
  const Outcome o = run("simulate --scenario bicopter_circle --seed 1 --out " + out().string());
  ASSERT_EQ(o.code, 0) << o.output;
  EXPECT_EQ(line_count(out() / "bicopter_circle_1.csv"), 2501u);
  EXPECT_TRUE(fs::exists(out() / "bicopter_circle_1.json"));
  EXPECT_TRUE(fs::exists(out() / "bicopter_circle_1.cfg"));
}

TEST_F(Cli, SignConditionViolationExitsOne) {
  const fs::path cfg = write("neg.cfg", "[bicopter_gains]\nk_tau_p_N_m_rad = -0.04\n");
  const Outcome o = run("simulate --config " + cfg.string() + " --out " + out().string());
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.output.find("sign condition"), std::string::npos) << o.output;
  EXPECT_FALSE(fs::exists(out()));
}

TEST_F(Cli, MissingConfigExitsOne) {
  const Outcome o =
      run("simulate --config " + (dir_ / "absent.cfg").string() + " --out " + out().string());
  EXPECT_EQ(o.code, 1);
  EXPECT_FALSE(fs::exists(out()));
}

TEST_F(Cli, UnknownScenarioExitsOne) {
  EXPECT_EQ(run("simulate --scenario nope --out " + out().string()).code, 1);
}

TEST_F(Cli, SlowLaunchFlagsMismatch) {
  const Outcome o = run("simulate --scenario slow_launch --out " + out().string());
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.output.find("mode mismatch"), std::string::npos) << o.output;
}

TEST_F(Cli, AnalyzeReportsDefaults) {
  const Outcome o = run("analyze --grid 50 --out " + out().string());
  ASSERT_EQ(o.code, 0) << o.output;
  EXPECT_NE(o.output.find("35.0"), std::string::npos) << o.output;
  EXPECT_NE(o.output.find("68.8"), std::string::npos) << o.output;
  EXPECT_NE(o.output.find("0.00248"), std::string::npos) << o.output;
  EXPECT_EQ(line_count(out() / "stability_map.csv"), 2501u);
}

TEST_F(Cli, AnalyzeRefusesZeroSpin) {
  const fs::path cfg = write("c0.cfg", "[airframe]\ntorque_ratio_m = 0\n");
  const Outcome o = run("analyze --config " + cfg.string() + " --out " + out().string());
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.output.find("zero"), std::string::npos) << o.output;
}

TEST_F(Cli, SuiteFailsOnUnstableGains) {
  const fs::path cfg = write("bad.cfg",
                             "[airframe]\ndrag_v_N_s_m = 0\n"
                             "[bicopter_gains]\nk_tau_d_N_m_s_rad = 0\nk_tau_p_N_m_rad = 0.01\n");
  const Outcome o = run("suite --config " + cfg.string() + " --only bicopter_flight");
  EXPECT_EQ(o.code, 3) << o.output;
  EXPECT_NE(o.output.find("FAIL"), std::string::npos);
}

TEST_F(Cli, EmptySuiteIsVacuousPass) {
  const Outcome o = run("suite --only \"\"");
  EXPECT_EQ(o.code, 0);
  EXPECT_NE(o.output.find("vacuous"), std::string::npos);
}

TEST_F(Cli, SuiteSubsetPasses) {
  const Outcome o = run("suite --only precession,cycle_average");
  EXPECT_EQ(o.code, 0) << o.output;
  EXPECT_NE(o.output.find("2/2"), std::string::npos);
}

TEST_F(Cli, NoSubcommandExitsOne) { EXPECT_EQ(run("").code, 1); }
