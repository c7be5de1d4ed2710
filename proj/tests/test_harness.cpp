#include "spinhover/config.hpp"
#include "spinhover/harness.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace spinhover;

namespace {

SimLogRecord record(double t, Vec3 position, Vec3 reference) {
  SimLogRecord r;
  r.t = t;
  r.position = position;
  r.reference = reference;
  r.mode = 1;
  r.deadzone = true;
  return r;
}

std::string csv_of(const ScenarioResult& r) {
  std::ostringstream os;
  write_log_csv(os, r.log);
  return os.str();
}

ScenarioResult run(const std::string& preset, std::uint64_t seed = 1) {
  return run_scenario(scenario_preset(preset), SimConfig{}, seed);
}

}  // namespace

TEST(Metrics, PerfectTrackingIsZero) {
  std::vector<SimLogRecord> log;
  for (int i = 0; i < 100; ++i) log.push_back(record(0.01 * i, Vec3(i, 0, 1), Vec3(i, 0, 1)));
  const FlightMetrics m = compute_metrics(log);
  EXPECT_EQ(m.rms_horizontal, 0.0);
  EXPECT_EQ(m.rms_vertical, 0.0);
  EXPECT_EQ(m.samples, 100u);
}

TEST(Metrics, ConstantOffsetThreeFourFive) {
  std::vector<SimLogRecord> log;
  for (int i = 0; i < 50; ++i) {
    log.push_back(record(0.01 * i, Vec3(0.03, 0.04, 1.05), Vec3(0, 0, 1)));
  }
  const FlightMetrics m = compute_metrics(log);
  EXPECT_NEAR(m.rms_horizontal, 0.05, 1e-12);
  EXPECT_NEAR(m.rms_vertical, 0.05, 1e-12);
}

TEST(Metrics, AlwaysInDeadzoneHasZeroDuty) {
  std::vector<SimLogRecord> log;
  for (int i = 0; i < 20; ++i) log.push_back(record(0.01 * i, Vec3::Zero(), Vec3::Zero()));
  EXPECT_EQ(compute_metrics(log).deadzone_duty, 0.0);
}

TEST(Metrics, WindowStartsAtFrom) {
  std::vector<SimLogRecord> log;
  log.push_back(record(0.0, Vec3(1, 0, 0), Vec3::Zero()));
  log.push_back(record(1.0, Vec3::Zero(), Vec3::Zero()));
  EXPECT_EQ(compute_metrics(log, 0.5).rms_horizontal, 0.0);
}

TEST(Scenario, CircleLogShape) {
  const ScenarioResult r = run("bicopter_circle");
  ASSERT_EQ(r.log.size(), 2500u);
  for (std::size_t i = 0; i < r.log.size(); ++i) {
    ASSERT_NEAR(r.log[i].t, 0.01 * static_cast<double>(i), 1e-9);
  }
  const std::string csv = csv_of(r);
  const std::string header = csv.substr(0, csv.find('\n'));
  EXPECT_EQ(std::count(header.begin(), header.end(), ',') + 1,
            static_cast<long>(log_columns().size()));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2501);
}

TEST(Scenario, CircleWithinHardwareBounds) {
  const ScenarioResult r = run("bicopter_circle");
  EXPECT_FALSE(r.metrics.crashed) << r.metrics.crash_reason;
  EXPECT_LE(r.metrics.rms_horizontal, 0.157);
  EXPECT_LE(r.metrics.rms_vertical, 0.088);
  EXPECT_EQ(r.metrics.detected_mode, FlightMode::Bicopter);
}

TEST(Scenario, SteadyYawRateNearEquilibrium) {
  const ScenarioResult r = run("hover");
  const double spin = r.equilibrium_yaw_rate;
  double sum = 0.0;
  int n = 0;
  for (const SimLogRecord& rec : r.log) {
    if (rec.t < 15.0 || rec.t > 20.0) continue;
    sum += rec.omega.z();
    ++n;
  }
  ASSERT_GT(n, 0);
  EXPECT_NEAR(sum / n, spin, 0.05 * std::abs(spin));
}

TEST(Scenario, IdealHoverIsTight) {
  const ScenarioResult r = run("hover");
  EXPECT_LT(r.metrics.rms_horizontal, 0.02);
  EXPECT_LT(r.metrics.rms_vertical, 0.02);
}

TEST(Scenario, DeterministicForSeed) {
  Scenario s = scenario_preset("bicopter_circle");
  s.noise = NoiseSpec::realistic();
  const std::string a = csv_of(run_scenario(s, {}, 42));
  const std::string b = csv_of(run_scenario(s, {}, 42));
  const std::string c = csv_of(run_scenario(s, {}, 43));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(Scenario, SlowLaunchIsMisdetected) {
  const ScenarioResult r = run("slow_launch");
  EXPECT_EQ(r.metrics.detected_mode, FlightMode::Quadcopter);
  EXPECT_TRUE(r.metrics.mode_mismatch);
}

TEST(Scenario, QuadOnStillPlatformIsQuadcopter) {
  const ScenarioResult r = run("quad_hover");
  EXPECT_EQ(r.metrics.detected_mode, FlightMode::Quadcopter);
  EXPECT_FALSE(r.metrics.mode_mismatch);
  EXPECT_FALSE(r.metrics.crashed);
}

TEST(Scenario, HandThrowRecovers) {
  const ScenarioResult r = run("hand_throw");
  EXPECT_FALSE(r.metrics.crashed) << r.metrics.crash_reason;
  EXPECT_TRUE(r.metrics.recovered);
  EXPECT_LE(r.metrics.recovery_time, kRecoveryDeadline);
}

TEST(Scenario, EquilibriumThrowHoldsImmediately) {
  const ScenarioResult r = run("equilibrium_throw");
  EXPECT_TRUE(r.metrics.recovered);
  EXPECT_NEAR(r.metrics.recovery_time, 0.0, 0.02);
}

TEST(Scenario, DualBicoptersLogBothVehicles) {
  const ScenarioResult r = run("dual_bicopter");
  ASSERT_EQ(r.per_vehicle.size(), 2u);
  EXPECT_EQ(r.log.size(), 5000u);
  for (const FlightMetrics& m : r.per_vehicle) {
    EXPECT_FALSE(m.crashed);
    EXPECT_LE(m.rms_horizontal, 0.157);
  }
}

TEST(Scenario, NoisySplitBrainWithinTwiceSingle) {
  Scenario single = scenario_preset("quad_ellipse");
  Scenario split = scenario_preset("split_brain_ellipse");
  single.noise = split.noise = NoiseSpec::realistic();
  const FlightMetrics a = run_scenario(single, {}, 3).metrics;
  const FlightMetrics b = run_scenario(split, {}, 3).metrics;
  EXPECT_FALSE(b.crashed);
  EXPECT_LE(std::hypot(b.rms_horizontal, b.rms_vertical),
            2.0 * std::hypot(a.rms_horizontal, a.rms_vertical));
}

TEST(Scenario, BoardFailureEndsInCrash) {
  const Scenario s = scenario_preset("split_brain_failure");
  const ScenarioResult r = run_scenario(s, {}, 1);
  ASSERT_TRUE(r.metrics.crashed);
  EXPECT_GT(r.metrics.crash_time, *s.board_failure_at);
}

TEST(Scenario, TiltDivergenceDetectedPromptly) {
  // A non-spinning airframe has no gyroscopic stiffness, so losing one
  // propeller tips it over well before it reaches the ground.
  Scenario s = scenario_preset("quad_hover");
  s.hover_height = 10.0;
  s.propeller_failure_at = 12.0;
  const SimConfig cfg;
  const ScenarioResult r = run_scenario(s, cfg, 1);
  ASSERT_TRUE(r.metrics.crashed);
  EXPECT_EQ(r.metrics.crash_reason, "tilt beyond limit");
  EXPECT_GT(r.metrics.crash_time, 12.0);
  double first_over = -1.0;
  for (const SimLogRecord& rec : r.log) {
    if (tilt_angle(rec.orientation) > cfg.tilt_crash) {
      first_over = rec.t;
      break;
    }
  }
  // Checked every physics step: no logged sample is past the envelope.
  EXPECT_LT(first_over, 0.0);
  EXPECT_LE(r.metrics.crash_time - r.log.back().t, 0.2);
}

TEST(Scenario, RejectsNonPositiveDuration) {
  Scenario s = scenario_preset("hover");
  s.duration = 0.0;
  EXPECT_THROW(run_scenario(s, {}, 1), std::invalid_argument);
}

TEST(Timing, DefaultRatesNest) {
  const SimConfig cfg;
  EXPECT_EQ(std::lround(cfg.outer_period / cfg.inner_period), 2);
  EXPECT_GE(std::lround(cfg.inner_period / cfg.physics_dt), 10);
  EXPECT_NEAR(cfg.outer_period, 0.01, 1e-15);
}

TEST(Noise, NormalMomentsAndDeterminism) {
  NoiseSource a(5), b(5);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = a.normal(2.0);
    ASSERT_EQ(x, b.normal(2.0));
    sum += x;
    sq += x * x;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.02);
  EXPECT_NEAR(std::sqrt(sq / n), 2.0, 0.02);
}
