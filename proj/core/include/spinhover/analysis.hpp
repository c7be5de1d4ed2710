#pragma once

// Relaxed-hover equilibrium, the reduced gyroscopic attitude model and the
// small-signal stability results built on it.

#include "spinhover/math.hpp"
#include "spinhover/vehicle.hpp"

#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <vector>

namespace spinhover {

/// Raised by analyses that assume a spinning vehicle when the equilibrium
/// yaw rate is zero.
class UndefinedRegime : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct RelaxedHoverEquilibrium {
  double yaw_rate = 0.0;          // rad/s
  double thrust_per_prop = 0.0;   // N
  Vec3 body_z = Vec3::UnitZ();
};

/// Constant spin rate at which the propeller reaction torque balances the
/// rotor-drag yaw torque: delta c m g / (D_h l^2).
double equilibrium_yaw_rate(const VehicleParams& p);

RelaxedHoverEquilibrium relaxed_hover_equilibrium(const VehicleParams& p);

/// Nutation frequency of the free gyroscope, I_z |Omega*| / I_d.
double precession_rate(const VehicleParams& p);

struct ReducedAttitudeState {
  Vec2 xi = Vec2::Zero();
  Vec2 xi_dot = Vec2::Zero();
  double psi = 0.0;
  double spin = 0.0;  // frozen Omega*_z
};

struct ReducedAttitudeDerivative {
  Vec2 xi_dot = Vec2::Zero();
  Vec2 xi_ddot = Vec2::Zero();
  double psi_dot = 0.0;
  bool out_of_envelope = false;  // |xi| > 0.3
};

inline constexpr double kReducedEnvelope = 0.3;

/// I_d xi'' + I_z Omega* J xi' = tau, psi' = Omega*.
ReducedAttitudeDerivative reduced_attitude_derivative(const ReducedAttitudeState& s,
                                                      const Vec2& torque,
                                                      const VehicleParams& p);

struct InertialTorque {
  Vec2 thrust;  // from the thrust differential
  Vec2 drag;    // from vertical rotor drag
  Vec2 total() const { return thrust + drag; }
};

/// Projection matrix of the vertical-drag torque at heading psi,
/// [[c^2, sc], [sc, s^2]]. Its cycle average is I/2.
Mat2 drag_projection(double psi);

/// Horizontal torque in the inertial frame given the differential torque
/// u = sum sigma_i l f_i.
InertialTorque inertial_torque(double psi, double differential, const Vec2& xi_dot,
                               const VehicleParams& p);

/// Same, from per-propeller thrusts ordered like p.propellers.
InertialTorque inertial_torque(double psi, const std::vector<double>& thrust,
                               const Vec2& xi_dot, const VehicleParams& p);

/// Attitude-loop gains seen by the small-signal analysis.
struct AttitudeGains {
  double kp = 0.0;  // N m / rad
  double kd = 0.0;  // N m s / rad
};

/// 4x4 first-order closed-loop model over (xi_x, xi_y, xi_x', xi_y') with
/// the cycle-averaged drag -l^2 D_v xi' / 2.
struct ClosedLoopModel {
  Eigen::Matrix4d a = Eigen::Matrix4d::Zero();
  double inertia_d = 0.0;
  double inertia_z = 0.0;
  double spin = 0.0;
  double kp = 0.0;
  double kd = 0.0;
  double drag_damping = 0.0;  // l^2 D_v / 2
  int delta = 1;
};

ClosedLoopModel closed_loop_matrix(const AttitudeGains& g, const VehicleParams& p);

/// Largest real part over the eigenvalues of the closed-loop matrix.
double max_real_eigenvalue(const ClosedLoopModel& m);

enum class Stability { Stable, Unstable, Marginal };

const char* to_string(Stability s);

struct StabilityReport {
  Stability verdict = Stability::Unstable;
  bool damping_condition = false;  // K_d + l^2 D_v / 2 > delta I_d K_p / (I_z Omega*)
  bool sign_condition = false;     // delta K_p / Omega* > 0
  double damping_lhs = 0.0;
  double damping_rhs = 0.0;
  double kp_upper_bound = 0.0;  // largest K_p satisfying the damping condition
  std::string violated;         // human-readable description, empty if stable
};

inline constexpr double kMarginalBand = 1e-6;

/// Routh-Hurwitz classification of the closed-loop model. Throws
/// UndefinedRegime when the equilibrium spin is zero.
StabilityReport routh_hurwitz_check(const AttitudeGains& g, const VehicleParams& p,
                                    double band = kMarginalBand);

/// Differential-torque program u(t, psi) applied identically to both models.
using DifferentialProgram = std::function<double(double t, double psi)>;

/// Program that realizes a constant inertial torque by cyclic allocation.
DifferentialProgram cyclic_program(const Vec2& torque);

struct LinearizationError {
  double max_deviation = 0.0;  // rad
  bool out_of_envelope = false;
};

/// Runs the full plant (spinning at Omega*) and the reduced model from the
/// same initial tilt under the same program; reports max |xi_full - xi_red|.
LinearizationError linearization_error(const VehicleParams& p, const Vec2& xi0,
                                       const DifferentialProgram& program, double horizon,
                                       double dt = 5e-4);

struct StabilityMapRow {
  double kp = 0.0;
  double kd = 0.0;
  int delta = 1;
  Stability verdict = Stability::Unstable;
  double max_real_eig = 0.0;
};

struct SweepSpec {
  double kp_min = -5e-3;
  double kp_max = 5e-3;
  int kp_steps = 50;
  double kd_min = 0.0;
  double kd_max = 2e-4;
  int kd_steps = 50;
};

/// Evaluates the Routh-Hurwitz verdict and the eigenvalue oracle on the
/// grid for each listed unit.
std::vector<StabilityMapRow> stability_map(
    const AirframeConstants& k, const SweepSpec& sweep,
    const std::vector<Handedness>& units = {Handedness::Cw, Handedness::Ccw});

void write_stability_csv(std::ostream& os, const std::vector<StabilityMapRow>& rows);

}  // namespace spinhover
