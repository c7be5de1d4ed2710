#pragma once

// Shared numerics: vector/rotation types, the fixed-step RK4 integrator,
// the first-order low-pass filter and the reduced-attitude (tilt) mapping.

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace spinhover {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Body-to-world rotation. Always kept at unit norm.
using Orientation = Eigen::Quaterniond;

inline constexpr double kPi = std::numbers::pi;

/// 90-degree rotation used throughout the gyroscopic attitude model,
/// J = [[0, 1], [-1, 0]].
inline Mat2 gyro_j() {
  Mat2 j;
  j << 0.0, 1.0, -1.0, 0.0;
  return j;
}

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  double w = std::remainder(a, 2.0 * kPi);
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

inline bool all_finite(const Eigen::Ref<const Eigen::VectorXd>& v) {
  return v.allFinite();
}

/// Thrown when an integrator meets a non-finite derivative.
class IntegrationFault : public std::runtime_error {
 public:
  IntegrationFault(double t, const std::string& what)
      : std::runtime_error(what + " at t=" + std::to_string(t)), time_(t) {}
  double time() const { return time_; }

 private:
  double time_;
};

/// One classical fourth-order Runge-Kutta step of x' = f(t, x).
///
/// `State` is any Eigen vector type. Throws IntegrationFault if any stage
/// derivative is non-finite, or std::invalid_argument for dt <= 0.
template <typename State, typename Derivative>
State rk4_step(Derivative&& f, const State& x, double t, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("rk4_step: dt must be > 0");
  auto check = [t](const State& k) {
    if (!k.allFinite()) throw IntegrationFault(t, "non-finite derivative");
    return k;
  };
  const double h2 = 0.5 * dt;
  const State k1 = check(f(t, x));
  const State k2 = check(f(t + h2, State(x + h2 * k1)));
  const State k3 = check(f(t + h2, State(x + h2 * k2)));
  const State k4 = check(f(t + dt, State(x + dt * k3)));
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// First-order low-pass filter with exact (exponential) discretization.
struct Lpf1 {
  double cutoff = 1.0;  // rad/s
  double value = 0.0;
  bool initialized = false;
};

/// y <- y + (1 - exp(-wc dt)) (u - y). The first sample seeds the state
/// unless the filter was initialized explicitly.
double lpf_step(Lpf1& filter, double input, double dt);

/// Two-channel variant for the tilt vector.
struct Lpf2 {
  Lpf1 x;
  Lpf1 y;
  explicit Lpf2(double cutoff = 1.0) {
    x.cutoff = cutoff;
    y.cutoff = cutoff;
  }
  Vec2 step(const Vec2& u, double dt) {
    return {lpf_step(x, u.x(), dt), lpf_step(y, u.y(), dt)};
  }
  void reset(const Vec2& v) {
    x.value = v.x();
    y.value = v.y();
    x.initialized = y.initialized = true;
  }
};

/// Reduced attitude (xi_x, xi_y) read off the body z axis, with
/// z_b ~ [xi_y, -xi_x, 1].
struct TiltReading {
  Vec2 xi = Vec2::Zero();
  bool out_of_envelope = false;  // tilt >= pi/2, reduced model invalid
};

TiltReading zb_to_xi(const Orientation& q);

/// Orientation whose body z axis is [xi_y, -xi_x, 1] (normalized), with the
/// given heading. Inverse of zb_to_xi up to O(|xi|^3).
Orientation orientation_from_xi(const Vec2& xi, double yaw);

/// Angle between body z and world z.
double tilt_angle(const Orientation& q);

/// Heading of the body x axis projected on the horizontal plane.
double yaw_of(const Orientation& q);

/// Quaternion derivative for body rates omega: q' = 0.5 q (0, omega).
Eigen::Vector4d quaternion_rate(const Orientation& q, const Vec3& omega);

}  // namespace spinhover
