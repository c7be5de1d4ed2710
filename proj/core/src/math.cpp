#include "spinhover/math.hpp"

namespace spinhover {

double lpf_step(Lpf1& filter, double input, double dt) {
  if (!(dt > 0.0) || !(filter.cutoff > 0.0)) {
    throw std::invalid_argument("lpf_step: dt and cutoff must be > 0");
  }
  if (!std::isfinite(input)) throw std::invalid_argument("lpf_step: non-finite input");
  if (!filter.initialized) {
    filter.value = input;
    filter.initialized = true;
    return filter.value;
  }
  const double alpha = 1.0 - std::exp(-filter.cutoff * dt);
  filter.value += alpha * (input - filter.value);
  return filter.value;
}

TiltReading zb_to_xi(const Orientation& q) {
  const Vec3 zb = q * Vec3::UnitZ();
  TiltReading r;
  r.xi = Vec2(-zb.y(), zb.x());
  r.out_of_envelope = zb.z() <= 0.0;
  return r;
}

Orientation orientation_from_xi(const Vec2& xi, double yaw) {
  const Vec3 zb = Vec3(xi.y(), -xi.x(), 1.0).normalized();
  // Shortest rotation taking e3 onto zb, applied after the heading.
  const Orientation tilt = Orientation::FromTwoVectors(Vec3::UnitZ(), zb);
  const Orientation heading(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
  return (tilt * heading).normalized();
}

double tilt_angle(const Orientation& q) {
  const Vec3 zb = q * Vec3::UnitZ();
  return std::acos(std::clamp(zb.z(), -1.0, 1.0));
}

double yaw_of(const Orientation& q) {
  const Mat3 r = q.toRotationMatrix();
  return std::atan2(r(1, 0), r(0, 0));
}

Eigen::Vector4d quaternion_rate(const Orientation& q, const Vec3& omega) {
  const Orientation w(0.0, omega.x(), omega.y(), omega.z());
  const Orientation d = q * w;
  return 0.5 * Eigen::Vector4d(d.w(), d.x(), d.y(), d.z());
}

}  // namespace spinhover
