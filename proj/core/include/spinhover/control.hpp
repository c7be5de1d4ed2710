#pragma once

// Cascaded flight control: position loop, gyroscopic attitude loop with
// deadzone/bang-bang shaping, cyclic torque allocation and motor mixing for
// the bicopter; a conventional cascade for the quadcopter; mode detection
// and yaw fusion.

#include "spinhover/analysis.hpp"
#include "spinhover/math.hpp"
#include "spinhover/vehicle.hpp"

#include <deque>
#include <optional>

namespace spinhover {

// ---------------------------------------------------------------------------
// Gains and setpoints
// ---------------------------------------------------------------------------

struct PositionGains {
  Vec3 kp = Vec3(2.0, 2.0, 16.0);   // 1/s^2
  Vec3 kd = Vec3(2.2, 2.2, 8.0);    // 1/s
  Vec3 ki = Vec3(0.2, 0.2, 4.0);    // 1/s^3
  double integrator_clamp = 0.5;    // m s, per axis
};

struct ControllerGains {
  PositionGains position;
  double k_tau_p = 0.04;          // N m / rad
  double k_tau_d = 8.0e-4;        // N m s / rad
  double xi_d_max = 0.12;         // rad, setpoint saturation
  double xi_err_deadzone = 0.035; // rad, deadzone / bang-bang threshold
  double lpf_cutoff = 10.0;       // rad/s
  double allocation_lead = 2.5e-3;  // s, heading advance for hold/motor delay
};

struct QuadGains {
  PositionGains position{Vec3(8.0, 8.0, 25.0), Vec3(5.0, 5.0, 10.0), Vec3(1.0, 1.0, 4.0), 0.5};
  Vec3 k_attitude = Vec3(0.05, 0.05, 0.01);      // N m / rad
  Vec3 k_rate = Vec3(4.0e-3, 4.0e-3, 3.0e-3);    // N m s / rad
  double tilt_max = 0.6;                          // rad
  double yaw_setpoint = 0.0;                      // rad
};

struct Setpoint {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 acceleration = Vec3::Zero();
};

// ---------------------------------------------------------------------------
// Position loop (bicopter)
// ---------------------------------------------------------------------------

struct PositionIntegrator {
  Vec3 integral = Vec3::Zero();  // m s
};

struct PositionCommand {
  double thrust = 0.0;       // N, total
  Vec2 xi_d = Vec2::Zero();  // rad, after saturation
  Vec3 force = Vec3::Zero(); // desired force before the small-angle mapping
  bool thrust_clamped = false;
  bool xi_saturated = false;
};

inline constexpr double kMinThrustFraction = 0.05;  // of weight, when T <= 0

/// PID on position error with acceleration feed-forward, mapped to total
/// thrust and tilt setpoint via z_b ~ [xi_y, -xi_x, 1]. Integrates the error
/// over `dt` unless `freeze_integrator` is set.
PositionCommand position_control(const Vec3& position, const Vec3& velocity,
                                 const Setpoint& sp, const ControllerGains& gains,
                                 double mass, double gravity, PositionIntegrator& integrator,
                                 double dt, bool freeze_integrator = false);

/// Scales `xi` to at most `limit` in magnitude, keeping its direction.
Vec2 saturate_norm(const Vec2& xi, double limit);

// ---------------------------------------------------------------------------
// Attitude loop (bicopter)
// ---------------------------------------------------------------------------

/// Zero inside |e| <= threshold, threshold * e / |e| outside.
Vec2 deadzone_bang_bang(const Vec2& error, double threshold);

/// -delta K_p J e - K_d e'.
Vec2 attitude_torque(const Vec2& shaped_error, const Vec2& error_rate, int delta,
                     const ControllerGains& gains);

struct AttitudeOutput {
  Vec2 torque = Vec2::Zero();        // desired inertial torque tau_{p,d}
  Vec2 xi_filtered = Vec2::Zero();
  Vec2 error = Vec2::Zero();         // before the deadzone
  Vec2 shaped_error = Vec2::Zero();  // after the deadzone
  bool deadzone_active = true;       // no torque this tick
};

/// Stateful attitude controller: low-pass filters the measured tilt, forms
/// the error against the setpoint, shapes it and applies the PD law.
class AttitudeController {
 public:
  AttitudeController(const ControllerGains& gains, int delta);
  AttitudeOutput update(const Vec2& xi_measured, const Vec2& xi_d, double dt);
  void reset(const Vec2& xi);

 private:
  ControllerGains gains_;
  int delta_;
  Lpf2 filter_;
  Lpf2 rate_filter_;
  std::optional<Vec2> last_error_;
};

// ---------------------------------------------------------------------------
// Torque generation and mixing (bicopter)
// ---------------------------------------------------------------------------

/// Differential torque u = sum sigma_i l f_i realizing `torque` on cycle
/// average at heading psi: u = 2 torque . (cos psi, sin psi).
double allocate_cyclic(const Vec2& torque, double psi);

struct MixResult {
  MotorCommand command;
  double thrust = 0.0;        // realized total
  double differential = 0.0;  // realized u
  bool thrust_limited = false;
  bool differential_clipped = false;
};

/// Inverts sum f = T and sum sigma_i l f_i = u for a two-propeller unit.
/// Total thrust has priority; u is clipped to the remaining authority.
MixResult mix_motors(double thrust, double differential, const VehicleParams& p);

// ---------------------------------------------------------------------------
// Quadcopter cascade
// ---------------------------------------------------------------------------

struct QuadFeedback {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Orientation orientation = Orientation::Identity();
  Vec3 gyro = Vec3::Zero();  // body rates from this board's IMU
};

struct QuadOutput {
  MotorCommand command;  // four thrusts ordered like the quad's propellers
  double thrust = 0.0;
  Vec3 torque = Vec3::Zero();
  bool saturated = false;
};

/// Four-propeller mixer for the assembled vehicle: total thrust plus body
/// torques to per-propeller thrust, clipped to the actuator range.
QuadOutput mix_quad(double thrust, const Vec3& torque, const VehicleParams& p);

/// Position PID to a desired force, geometric attitude control to body
/// torques, then the plus-configuration mixer.
class QuadCascade {
 public:
  QuadCascade(const QuadGains& gains, const VehicleParams& params);

  /// Outer loop: updates the desired force and attitude.
  void update_position(const QuadFeedback& fb, const Setpoint& sp, double dt);
  /// Inner loop: attitude tracking and mixing with the latest outer output.
  QuadOutput update_attitude(const QuadFeedback& fb);

  /// Both loops in one call.
  QuadOutput step(const QuadFeedback& fb, const Setpoint& sp, double dt);

  const Vec3& desired_force() const { return force_; }
  bool last_saturated() const { return saturated_; }

 private:
  QuadGains gains_;
  VehicleParams params_;
  PositionIntegrator integrator_;
  Vec3 force_;
  Mat3 attitude_d_ = Mat3::Identity();
  bool saturated_ = false;
};

/// Stateless form of the cascade for one tick.
QuadOutput quad_cascade(const QuadFeedback& fb, const Setpoint& sp, const QuadGains& gains,
                        const VehicleParams& params, PositionIntegrator& integrator,
                        double dt);

/// Two non-communicating cascades, one per bicopter board. Each computes
/// the full quadcopter law from its own feedback and drives only its own
/// two propellers.
class SplitBrainQuad {
 public:
  SplitBrainQuad(const QuadGains& gains, const VehicleParams& params);

  void update_position(const QuadFeedback& fb_cw, const QuadFeedback& fb_ccw,
                       const Setpoint& sp, double dt);
  QuadOutput update_attitude(const QuadFeedback& fb_cw, const QuadFeedback& fb_ccw);

  /// Zeroes the thrust of the named board from now on (failure injection).
  void fail_board(Handedness board) { failed_ = board; }

 private:
  VehicleParams params_;
  QuadCascade cw_;
  QuadCascade ccw_;
  std::optional<Handedness> failed_;
};

// ---------------------------------------------------------------------------
// Mode detection and yaw fusion
// ---------------------------------------------------------------------------

enum class FlightMode { Quadcopter, Bicopter };
enum class DetectorState { Armed, Monitoring, Latched };

const char* to_string(FlightMode m);

struct ModeDetectorConfig {
  double threshold = 8.7;  // rad/s, strict
  double window = 0.5;     // s
  double sustain = 0.05;   // s
};

/// Latches Bicopter when |yaw rate| stays above the threshold for the
/// sustain time inside the takeoff window, Quadcopter otherwise.
class ModeDetector {
 public:
  explicit ModeDetector(ModeDetectorConfig cfg = {}) : cfg_(cfg) {}

  void sample(double t, double yaw_rate);
  DetectorState state() const { return state_; }
  std::optional<FlightMode> mode() const { return mode_; }
  void disarm();

 private:
  ModeDetectorConfig cfg_;
  DetectorState state_ = DetectorState::Armed;
  std::optional<FlightMode> mode_;
  double window_start_ = 0.0;
  std::optional<double> above_since_;
};

/// Convenience: feeds (t, yaw rate) samples through a fresh detector.
FlightMode detect_mode(const std::vector<std::pair<double, double>>& samples,
                       ModeDetectorConfig cfg = {});

struct YawEstimatorConfig {
  double blend = 0.2;        // per external fix
  double stale_after = 0.1;  // s
  double history = 0.2;      // s of estimates kept for latency compensation
};

/// Integrates the gyro yaw rate and blends toward delayed external heading
/// fixes, comparing each fix against the estimate at its capture time.
class YawEstimator {
 public:
  explicit YawEstimator(YawEstimatorConfig cfg = {}) : cfg_(cfg) {}

  void gyro(double t, double yaw_rate);
  void fix(double captured_at, double heading);

  double estimate() const { return wrap_angle(psi_); }
  bool stale(double now) const;
  bool initialized() const { return initialized_; }

 private:
  double estimate_at(double t) const;

  YawEstimatorConfig cfg_;
  double psi_ = 0.0;  // unwrapped
  double last_t_ = 0.0;
  double last_rate_ = 0.0;
  bool have_gyro_ = false;
  bool initialized_ = false;
  std::optional<double> last_fix_;
  std::deque<std::pair<double, double>> history_;
};

// ---------------------------------------------------------------------------
// Complete bicopter controller
// ---------------------------------------------------------------------------

struct BicopterTelemetry {
  PositionCommand position;
  AttitudeOutput attitude;
  double psi_estimate = 0.0;
  double differential = 0.0;
  bool thrust_limited = false;
  bool differential_clipped = false;
  bool yaw_stale = false;
};

/// Ground-station part (position and attitude at the outer rate) plus the
/// onboard part (yaw fusion, allocation and mixing at the inner rate).
class BicopterController {
 public:
  BicopterController(const ControllerGains& gains, const VehicleParams& params);

  /// Outer loop: position and tilt feedback from the external tracker.
  void update_outer(const Vec3& position, const Vec3& velocity, const Vec2& xi,
                    const Setpoint& sp, double dt);
  /// Onboard loop: returns the motor command.
  MotorCommand update_inner(double t, double gyro_yaw_rate);
  void heading_fix(double captured_at, double heading) { yaw_.fix(captured_at, heading); }

  const BicopterTelemetry& telemetry() const { return telemetry_; }

 private:
  ControllerGains gains_;
  VehicleParams params_;
  PositionIntegrator integrator_;
  AttitudeController attitude_;
  YawEstimator yaw_;
  BicopterTelemetry telemetry_;
};

/// Rejects gains that fail the gyroscopic stability conditions for the unit.
/// Throws std::invalid_argument with the violated inequality.
void require_stable_gains(const ControllerGains& gains, const VehicleParams& unit);

}  // namespace spinhover
