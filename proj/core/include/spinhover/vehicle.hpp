#pragma once

// Physical truth for one spinning bicopter or the quadcopter assembled from
// two of them: parameters, propeller forces/torques and the 6-DOF plant.

#include "spinhover/math.hpp"

#include <functional>
#include <string>
#include <vector>

namespace spinhover {

/// Propeller torque direction of a unit. Cw units have thrust and reaction
/// torque aligned.
enum class Handedness { Cw = 1, Ccw = -1 };

inline int sign_of(Handedness h) { return static_cast<int>(h); }

enum class Airframe { BicopterCw, BicopterCcw, Quadcopter };

std::string to_string(Airframe a);

/// Physical constants of one bicopter unit plus assembly data for the quad.
/// Drag coefficients are lumped per unit (the pair of propellers); each
/// propeller carries half.
struct AirframeConstants {
  double mass = 0.026;               // kg
  double gravity = 9.81;             // m/s^2
  double arm = 0.060;                // m, half the propeller spacing
  double torque_ratio = 0.008;       // m, yaw torque / thrust
  double drag_h = 0.01619;           // N s/m
  double drag_v = 0.02;              // N s/m
  double inertia_d = 5.75e-5;        // kg m^2, roll/pitch
  double inertia_z = 1.13e-4;        // kg m^2, spin axis
  double thrust_max = 0.18;          // N per propeller
  double motor_time_constant = 0.0;  // s, 0 = ideal motors
  double quad_mass = 0.0551;         // kg, both units plus the attachment
  double module_spacing = 0.045;     // m, vertical offset of the two units
};

struct Propeller {
  int index = 1;             // 1..4
  Vec3 position;             // body frame, relative to the centre of mass
  int sigma = 1;             // roll-torque sign of the unit's own frame
  int delta = 1;             // yaw reaction torque sign
  Vec3 drag = Vec3::Zero();  // diagonal of the per-propeller drag matrix
};

struct VehicleParams {
  Airframe airframe = Airframe::BicopterCw;
  double mass = 0.0;
  double gravity = 9.81;
  double arm = 0.0;
  double torque_ratio = 0.0;
  double drag_h = 0.0;  // lumped per unit
  double drag_v = 0.0;  // lumped per unit
  double inertia_d = 0.0;
  double inertia_z = 0.0;
  double thrust_max = 0.0;
  double thrust_min = 0.0;
  int handedness = 1;  // delta of the unit; 0 for the quadcopter
  double motor_time_constant = 0.0;
  std::vector<Propeller> propellers;

  Mat3 inertia() const { return Vec3(inertia_d, inertia_d, inertia_z).asDiagonal(); }
  double weight() const { return mass * gravity; }
  std::size_t propeller_slot(int index) const;  // throws on unknown index

  /// Throws std::invalid_argument naming the first violated invariant.
  void validate() const;
};

VehicleParams make_bicopter(const AirframeConstants& k, Handedness h);
VehicleParams make_quadcopter(const AirframeConstants& k);
VehicleParams make_vehicle(const AirframeConstants& k, Airframe a);

struct RigidBodyState {
  Vec3 position = Vec3::Zero();  // world, m
  Vec3 velocity = Vec3::Zero();  // world, m/s
  Orientation orientation = Orientation::Identity();
  Vec3 omega = Vec3::Zero();  // body rates, rad/s
};

/// Per-propeller thrust, ordered like VehicleParams::propellers.
struct MotorCommand {
  std::vector<double> thrust;
};

struct Wrench {
  Vec3 force = Vec3::Zero();   // body frame
  Vec3 torque = Vec3::Zero();  // body frame, about the centre of mass
};

/// Air velocity seen by propeller `slot` in the body frame:
/// R^T v + omega x l_i. No near-hover simplification.
Vec3 local_air_velocity(const RigidBodyState& s, const VehicleParams& p, std::size_t slot);

/// Thrust, reaction torque and rotor drag summed over all propellers.
/// Throws std::out_of_range if a thrust is outside [thrust_min, thrust_max].
Wrench propeller_wrench(const RigidBodyState& s, const std::vector<double>& thrust,
                        const VehicleParams& p);

/// Packed plant state: p(3) v(3) q(w,x,y,z) omega(3), then one thrust per
/// propeller when motor lag is enabled.
class PlantVector {
 public:
  static constexpr int kPos = 0;
  static constexpr int kVel = 3;
  static constexpr int kQuat = 6;
  static constexpr int kOmega = 10;
  static constexpr int kMotors = 13;

  static Eigen::VectorXd pack(const RigidBodyState& s, const std::vector<double>& motor_state);
  static RigidBodyState unpack(const Eigen::VectorXd& x);
  static std::vector<double> motors(const Eigen::VectorXd& x);
};

/// Time derivative of the packed state. With motor lag the commanded thrust
/// drives the motor states; otherwise the command is applied directly.
Eigen::VectorXd dynamics_derivative(const Eigen::VectorXd& x, const MotorCommand& cmd,
                                    const VehicleParams& p);

/// Fixed-step plant with zero-order-hold commands and an optional ground
/// plane at z = 0.
class Plant {
 public:
  Plant(VehicleParams params, const RigidBodyState& initial, bool ground = false);

  void set_command(const MotorCommand& cmd);
  void step(double dt);

  /// Kinematic hold (launch platform): position/velocity frozen, the body
  /// spins about world z at `yaw_rate`.
  void hold_spinning(double yaw_rate, double dt);

  const RigidBodyState& state() const { return state_; }
  const VehicleParams& params() const { return params_; }
  const MotorCommand& command() const { return command_; }
  std::vector<double> applied_thrust() const;
  double time() const { return time_; }
  bool on_ground() const { return on_ground_; }
  double last_impact_speed() const { return impact_speed_; }

 private:
  VehicleParams params_;
  RigidBodyState state_;
  MotorCommand command_;
  std::vector<double> motor_state_;
  double time_ = 0.0;
  bool ground_ = false;
  bool on_ground_ = false;
  double impact_speed_ = 0.0;
};

/// Truth sample produced by `simulate`.
struct TruthSample {
  double t = 0.0;
  RigidBodyState state;
  std::vector<double> thrust;
};

struct SimulationResult {
  std::vector<TruthSample> samples;  // one per controller call
  bool crashed = false;
  double crash_time = 0.0;
  std::string crash_reason;
};

using ControllerCallback = std::function<MotorCommand(double t, const RigidBodyState&)>;

/// Deterministic fixed-step rollout. The controller is sampled every
/// `control_period` (a multiple of physics_dt); divergence (|p| > 100 m or a
/// non-finite state) aborts the run and flags it crashed.
SimulationResult simulate(const RigidBodyState& initial, const ControllerCallback& controller,
                          const VehicleParams& params, double duration, double physics_dt,
                          double control_period);

}  // namespace spinhover
