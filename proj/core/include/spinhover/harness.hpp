#pragma once

// Closed-loop flight scenarios: multi-rate controller/plant loop, sensor
// models, reference trajectories, logging and flight metrics.

#include "spinhover/control.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace spinhover {

enum class VehicleConfig { BicopterCw, BicopterCcw, Quadcopter, DualBicopter };
enum class TrajectoryKind { Hover, Circle, Ellipse, HandThrow };

const char* to_string(VehicleConfig v);
const char* to_string(TrajectoryKind t);
VehicleConfig parse_vehicle_config(const std::string& s);
TrajectoryKind parse_trajectory(const std::string& s);

struct NoiseSpec {
  double position = 0.0;       // m, tracker position sigma
  double tilt = 0.0;           // rad, tracker/onboard tilt sigma
  double heading = 0.0;        // rad, tracker heading sigma
  double gyro = 0.0;           // rad/s, white noise sigma
  double gyro_bias = 0.0;      // rad/s, constant on every axis
  double latency = 0.0;        // s, tracker delay
  double motor_lag = 0.0;      // s, first-order motor time constant

  static NoiseSpec ideal() { return {}; }
  static NoiseSpec realistic();
};

/// Gaussian source with a portable normal transform (Box-Muller on
/// mt19937_64) so sequences match across standard libraries.
class NoiseSource {
 public:
  explicit NoiseSource(std::uint64_t seed) : rng_(seed) {}
  double normal(double sigma);
  double uniform(double lo, double hi);
  Vec3 normal3(double sigma) { return Vec3(normal(sigma), normal(sigma), normal(sigma)); }

 private:
  std::mt19937_64 rng_;
  std::optional<double> spare_;
};

struct HandThrow {
  Vec3 position = Vec3(0.0, 0.0, 1.5);
  Vec3 velocity = Vec3(1.0, 0.0, 0.5);
  double tilt = 0.2;            // rad
  double tilt_direction = 0.0;  // rad, heading of the tilt axis
  double yaw_rate = 26.0;       // rad/s
  double braking_time = 1.5;    // s, reference decelerates to rest over this
  bool randomize = false;       // draw tilt, direction and velocity heading from the seed
  double tilt_max = 0.3;        // rad, upper bound of the random tilt
};

struct Scenario {
  std::string name = "hover";
  VehicleConfig vehicle = VehicleConfig::BicopterCw;
  TrajectoryKind trajectory = TrajectoryKind::Hover;
  double duration = 25.0;         // s
  double hover_height = 1.0;      // m
  double takeoff_time = 3.0;      // s
  double land_time = 3.0;         // s
  double circle_radius = 0.3;     // m
  double circle_period = 3.0;     // s
  int circle_laps = 1;
  double ellipse_a = 0.6;         // m
  double ellipse_b = 0.4;         // m
  double ellipse_period = 6.0;    // s
  int ellipse_laps = 2;
  double launch_yaw_rate = 10.0;  // rad/s on the platform
  double detection_window = 0.5;  // s
  bool split_brain = false;
  std::optional<double> board_failure_at;  // s, split-brain CW board drops out
  std::optional<double> propeller_failure_at;  // s, propeller 1 thrust forced to zero
  HandThrow hand_throw;
  NoiseSpec noise;
};

struct SimConfig {
  AirframeConstants airframe;
  ControllerGains gains;
  QuadGains quad_gains;
  double physics_dt = 5e-4;     // s
  double inner_period = 5e-3;   // s, onboard allocation / attitude
  double outer_period = 1e-2;   // s, tracker-side loop and logging
  double velocity_cutoff = 40.0;  // rad/s, tracker velocity filter
  ModeDetectorConfig detector;
  double tilt_crash = 1.2;          // rad
  double escape_radius = 100.0;     // m
  double hard_landing_speed = 1.0;  // m/s
};

/// Piecewise reference: platform/ground hold, takeoff, hover, pattern,
/// hover, landing. Hand throws use a braking profile instead.
class ReferenceTrajectory {
 public:
  ReferenceTrajectory(const Scenario& s, Vec3 origin);
  /// Braking reference starting from the released state at time t0.
  static ReferenceTrajectory braking(Vec3 p0, Vec3 v0, double t0, double braking_time,
                                     double duration);

  Setpoint at(double t) const;
  /// Rest point of a braking reference.
  const Vec3& hold_point() const { return hold_; }
  double pattern_start() const { return pattern_start_; }
  double pattern_end() const { return pattern_end_; }

 private:
  ReferenceTrajectory() = default;

  TrajectoryKind kind_ = TrajectoryKind::Hover;
  Vec3 origin_ = Vec3::Zero();
  Vec3 hold_ = Vec3::Zero();
  Vec3 brake_v0_ = Vec3::Zero();
  double t_takeoff_ = 0.5, t_hover_ = 3.5, pattern_start_ = 5.5, pattern_end_ = 5.5,
         t_land_ = 22.0, t_end_ = 25.0;
  double height_ = 1.0;
  double radius_x_ = 0.0, radius_y_ = 0.0;
  double ramp_ = 2.0;
  double omega_ = 0.0;
  double brake_t0_ = 0.0, brake_time_ = 1.0;
};

struct SimLogRecord {
  double t = 0.0;
  int vehicle = 0;           // 0 single, 1/2 for the two bicopters of a dual run
  int mode = -1;             // -1 undecided, 0 quadcopter, 1 bicopter
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Orientation orientation = Orientation::Identity();
  Vec3 omega = Vec3::Zero();
  Vec3 reference = Vec3::Zero();
  Vec2 xi = Vec2::Zero();
  Vec2 xi_filtered = Vec2::Zero();
  Vec2 xi_d = Vec2::Zero();
  Vec2 xi_error = Vec2::Zero();
  Vec2 xi_error_shaped = Vec2::Zero();
  Vec2 torque_cmd = Vec2::Zero();
  double psi = 0.0;
  double psi_estimate = 0.0;
  double thrust = 0.0;
  double differential = 0.0;
  double motor[4] = {0.0, 0.0, 0.0, 0.0};
  bool deadzone = false;
  bool saturated = false;
};

/// Column names, in output order.
const std::vector<std::string>& log_columns();
void write_log_csv(std::ostream& os, const std::vector<SimLogRecord>& log);

struct FlightMetrics {
  double rms_horizontal = 0.0;   // m
  double rms_vertical = 0.0;     // m
  double deadzone_duty = 0.0;    // fraction of bicopter ticks with torque applied
  double final_yaw_rate = 0.0;   // rad/s
  double mean_yaw_rate = 0.0;    // rad/s over the airborne part
  double max_tilt = 0.0;         // rad
  bool crashed = false;
  double crash_time = 0.0;
  std::string crash_reason;
  bool mode_mismatch = false;
  std::optional<FlightMode> detected_mode;
  bool recovered = false;        // hand throw: held within the radius
  double recovery_time = -1.0;   // s after release, -1 if never
  std::size_t samples = 0;
};

struct ScenarioResult {
  Scenario scenario;
  std::uint64_t seed = 0;
  std::vector<SimLogRecord> log;
  FlightMetrics metrics;                 // worst case over vehicles
  std::vector<FlightMetrics> per_vehicle;
  double equilibrium_yaw_rate = 0.0;
};

/// Metrics over records with t >= `from`. Tracking error is against the
/// logged reference.
FlightMetrics compute_metrics(const std::vector<SimLogRecord>& log, double from = 0.0);

/// Runs the scenario deterministically for the given seed.
ScenarioResult run_scenario(const Scenario& s, const SimConfig& cfg, std::uint64_t seed);

inline constexpr double kRecoveryRadius = 0.3;  // m
inline constexpr double kRecoveryDeadline = 5.0;  // s after release

/// Structured summary of one run.
void write_metrics_json(std::ostream& os, const ScenarioResult& r);

}  // namespace spinhover
