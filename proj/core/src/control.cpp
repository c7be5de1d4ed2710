#include "spinhover/control.hpp"

#include <sstream>

namespace spinhover {

namespace {

Vec3 pid_force(const Vec3& position, const Vec3& velocity, const Setpoint& sp,
               const PositionGains& g, double mass, double gravity,
               PositionIntegrator& integrator, double dt, bool freeze) {
  if (!(dt > 0.0)) throw std::invalid_argument("position loop: dt must be positive");
  const Vec3 e = position - sp.position;
  const Vec3 e_dot = velocity - sp.velocity;
  if (!freeze) {
    integrator.integral += e * dt;
    integrator.integral =
        integrator.integral.cwiseMax(-g.integrator_clamp).cwiseMin(g.integrator_clamp);
  }
  const Vec3 accel = sp.acceleration - g.kd.cwiseProduct(e_dot) - g.kp.cwiseProduct(e) -
                     g.ki.cwiseProduct(integrator.integral);
  return mass * accel + mass * gravity * Vec3::UnitZ();
}

Vec3 vee(const Mat3& m) { return Vec3(m(2, 1), m(0, 2), m(1, 0)); }

}  // namespace

Vec2 saturate_norm(const Vec2& xi, double limit) {
  const double n = xi.norm();
  if (n <= limit) return xi;
  return xi * (limit / n);
}

PositionCommand position_control(const Vec3& position, const Vec3& velocity,
                                 const Setpoint& sp, const ControllerGains& gains,
                                 double mass, double gravity, PositionIntegrator& integrator,
                                 double dt, bool freeze_integrator) {
  PositionCommand out;
  out.force = pid_force(position, velocity, sp, gains.position, mass, gravity, integrator, dt,
                        freeze_integrator);

  double thrust = out.force.z();
  if (thrust <= 0.0) {
    thrust = kMinThrustFraction * mass * gravity;
    out.thrust_clamped = true;
  }
  out.thrust = thrust;

  // z_b ~ [xi_y, -xi_x, 1] aligned with F / F_z.
  const Vec2 xi_raw(-out.force.y() / thrust, out.force.x() / thrust);
  out.xi_d = saturate_norm(xi_raw, gains.xi_d_max);
  out.xi_saturated = xi_raw.norm() > gains.xi_d_max;
  return out;
}

Vec2 deadzone_bang_bang(const Vec2& error, double threshold) {
  const double n = error.norm();
  if (n <= threshold) return Vec2::Zero();
  return error * (threshold / n);
}

Vec2 attitude_torque(const Vec2& shaped_error, const Vec2& error_rate, int delta,
                     const ControllerGains& gains) {
  return -delta * gains.k_tau_p * (gyro_j() * shaped_error) - gains.k_tau_d * error_rate;
}

AttitudeController::AttitudeController(const ControllerGains& gains, int delta)
    : gains_(gains), delta_(delta) {
  if (delta != 1 && delta != -1) {
    throw std::invalid_argument("AttitudeController: delta must be +1 or -1");
  }
  filter_.x.cutoff = gains.lpf_cutoff;
  filter_.y.cutoff = gains.lpf_cutoff;
  rate_filter_.x.cutoff = gains.lpf_cutoff;
  rate_filter_.y.cutoff = gains.lpf_cutoff;
}

void AttitudeController::reset(const Vec2& xi) {
  filter_.reset(xi);
  rate_filter_.reset(Vec2::Zero());
  last_error_.reset();
}

AttitudeOutput AttitudeController::update(const Vec2& xi_measured, const Vec2& xi_d,
                                          double dt) {
  AttitudeOutput out;
  out.xi_filtered = filter_.step(xi_measured, dt);
  out.error = out.xi_filtered - xi_d;
  out.shaped_error = deadzone_bang_bang(out.error, gains_.xi_err_deadzone);
  out.deadzone_active = out.shaped_error.isZero(0.0);

  // Differenced error, smoothed once more so the spin-rate harmonics left
  // after the first filter do not reach the derivative term.
  const Vec2 raw_rate = last_error_ ? Vec2((out.error - *last_error_) / dt) : Vec2::Zero();
  const Vec2 rate = rate_filter_.step(raw_rate, dt);
  last_error_ = out.error;
  out.torque = attitude_torque(out.shaped_error, rate, delta_, gains_);
  return out;
}

double allocate_cyclic(const Vec2& torque, double psi) {
  return 2.0 * torque.dot(Vec2(std::cos(psi), std::sin(psi)));
}

MixResult mix_motors(double thrust, double differential, const VehicleParams& p) {
  if (p.propellers.size() != 2) {
    throw std::invalid_argument("mix_motors: needs a two-propeller unit");
  }
  MixResult r;
  const double t_max = 2.0 * p.thrust_max;
  const double t_min = 2.0 * p.thrust_min;
  double t = thrust;
  if (t > t_max) {
    t = t_max;
    r.thrust_limited = true;
  } else if (t < t_min) {
    t = t_min;
    r.thrust_limited = true;
  }

  // f_k = (T + sigma_k u / l) / 2; keep both inside [f_min, f_max].
  const double margin = std::min(t_max - t, t - t_min);
  double spread = differential / p.arm;
  if (std::abs(spread) > margin) {
    spread = std::copysign(margin, spread);
    r.differential_clipped = true;
  }

  r.command.thrust.resize(2);
  for (std::size_t k = 0; k < 2; ++k) {
    const double f = 0.5 * (t + p.propellers[k].sigma * spread);
    r.command.thrust[k] = std::clamp(f, p.thrust_min, p.thrust_max);
  }
  r.thrust = t;
  r.differential = spread * p.arm;
  return r;
}

QuadOutput mix_quad(double thrust, const Vec3& torque, const VehicleParams& p) {
  if (p.propellers.size() != 4) throw std::invalid_argument("mix_quad: needs four propellers");
  const double l = p.arm;
  const double c = p.torque_ratio;
  // Plus layout: props 1/3 on the body y axis (CW unit), 2/4 on x (CCW unit).
  const double cw_pair = 0.5 * (thrust + torque.z() / c);
  const double ccw_pair = 0.5 * (thrust - torque.z() / c);
  double f[4] = {
      0.5 * cw_pair + torque.x() / (2.0 * l),
      0.5 * ccw_pair + torque.y() / (2.0 * l),
      0.5 * cw_pair - torque.x() / (2.0 * l),
      0.5 * ccw_pair - torque.y() / (2.0 * l),
  };
  QuadOutput out;
  out.thrust = thrust;
  out.torque = torque;
  out.command.thrust.resize(4);
  for (int k = 0; k < 4; ++k) {
    const double clipped = std::clamp(f[k], p.thrust_min, p.thrust_max);
    out.saturated = out.saturated || clipped != f[k];
    out.command.thrust[p.propeller_slot(k + 1)] = clipped;
  }
  return out;
}

QuadCascade::QuadCascade(const QuadGains& gains, const VehicleParams& params)
    : gains_(gains), params_(params), force_(params.weight() * Vec3::UnitZ()) {
  if (params.propellers.size() != 4) {
    throw std::invalid_argument("QuadCascade: needs the assembled quadcopter");
  }
}

void QuadCascade::update_position(const QuadFeedback& fb, const Setpoint& sp, double dt) {
  Vec3 f = pid_force(fb.position, fb.velocity, sp, gains_.position, params_.mass,
                     params_.gravity, integrator_, dt, saturated_);
  if (f.z() < kMinThrustFraction * params_.weight()) {
    f.z() = kMinThrustFraction * params_.weight();
  }
  // Tilt limit on the desired thrust direction.
  const double horiz = f.head<2>().norm();
  const double max_horiz = f.z() * std::tan(gains_.tilt_max);
  if (horiz > max_horiz) f.head<2>() *= max_horiz / horiz;
  force_ = f;

  const Vec3 zd = f.normalized();
  const Vec3 xc(std::cos(gains_.yaw_setpoint), std::sin(gains_.yaw_setpoint), 0.0);
  const Vec3 yd = zd.cross(xc).normalized();
  const Vec3 xd = yd.cross(zd);
  attitude_d_.col(0) = xd;
  attitude_d_.col(1) = yd;
  attitude_d_.col(2) = zd;
}

QuadOutput QuadCascade::update_attitude(const QuadFeedback& fb) {
  const Mat3 r = fb.orientation.normalized().toRotationMatrix();
  const Vec3 e_r = 0.5 * vee(attitude_d_.transpose() * r - r.transpose() * attitude_d_);
  const Vec3& w = fb.gyro;
  const Vec3 torque = -gains_.k_attitude.cwiseProduct(e_r) - gains_.k_rate.cwiseProduct(w) +
                      w.cross(params_.inertia() * w);
  const double thrust = force_.dot(r.col(2));
  QuadOutput out = mix_quad(std::max(thrust, 0.0), torque, params_);
  saturated_ = out.saturated;
  return out;
}

QuadOutput QuadCascade::step(const QuadFeedback& fb, const Setpoint& sp, double dt) {
  update_position(fb, sp, dt);
  return update_attitude(fb);
}

QuadOutput quad_cascade(const QuadFeedback& fb, const Setpoint& sp, const QuadGains& gains,
                        const VehicleParams& params, PositionIntegrator& integrator,
                        double dt) {
  // The integral term is folded into the feed-forward so the caller owns it.
  const Vec3 e = fb.position - sp.position;
  integrator.integral = (integrator.integral + e * dt)
                            .cwiseMax(-gains.position.integrator_clamp)
                            .cwiseMin(gains.position.integrator_clamp);
  Setpoint with_i = sp;
  with_i.acceleration -= gains.position.ki.cwiseProduct(integrator.integral);
  QuadGains no_i = gains;
  no_i.position.ki.setZero();
  QuadCascade cascade(no_i, params);
  return cascade.step(fb, with_i, dt);
}

SplitBrainQuad::SplitBrainQuad(const QuadGains& gains, const VehicleParams& params)
    : params_(params), cw_(gains, params), ccw_(gains, params) {}

void SplitBrainQuad::update_position(const QuadFeedback& fb_cw, const QuadFeedback& fb_ccw,
                                     const Setpoint& sp, double dt) {
  cw_.update_position(fb_cw, sp, dt);
  ccw_.update_position(fb_ccw, sp, dt);
}

QuadOutput SplitBrainQuad::update_attitude(const QuadFeedback& fb_cw,
                                           const QuadFeedback& fb_ccw) {
  const QuadOutput a = cw_.update_attitude(fb_cw);
  const QuadOutput b = ccw_.update_attitude(fb_ccw);
  QuadOutput out;
  out.command.thrust.assign(4, 0.0);
  out.thrust = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    const Propeller& prop = params_.propellers[k];
    const bool cw_board = prop.delta > 0;
    const QuadOutput& src = cw_board ? a : b;
    const bool failed = failed_ && (*failed_ == Handedness::Cw) == cw_board;
    out.command.thrust[k] = failed ? params_.thrust_min : src.command.thrust[k];
    out.thrust += out.command.thrust[k];
  }
  out.torque = 0.5 * (a.torque + b.torque);
  out.saturated = a.saturated || b.saturated;
  return out;
}

const char* to_string(FlightMode m) {
  return m == FlightMode::Bicopter ? "bicopter" : "quadcopter";
}

void ModeDetector::sample(double t, double yaw_rate) {
  constexpr double kTimeSlack = 1e-9;
  if (state_ == DetectorState::Latched) return;
  if (!std::isfinite(yaw_rate)) throw std::invalid_argument("ModeDetector: non-finite rate");
  if (state_ == DetectorState::Armed) {
    state_ = DetectorState::Monitoring;
    window_start_ = t;
  }
  if (std::abs(yaw_rate) > cfg_.threshold) {
    if (!above_since_) above_since_ = t;
    if (t - *above_since_ >= cfg_.sustain - kTimeSlack) {
      mode_ = FlightMode::Bicopter;
      state_ = DetectorState::Latched;
      return;
    }
  } else {
    above_since_.reset();
  }
  if (t - window_start_ >= cfg_.window - kTimeSlack) {
    mode_ = FlightMode::Quadcopter;
    state_ = DetectorState::Latched;
  }
}

void ModeDetector::disarm() {
  state_ = DetectorState::Armed;
  mode_.reset();
  above_since_.reset();
}

FlightMode detect_mode(const std::vector<std::pair<double, double>>& samples,
                       ModeDetectorConfig cfg) {
  ModeDetector d(cfg);
  for (const auto& [t, rate] : samples) {
    d.sample(t, rate);
    if (d.mode()) return *d.mode();
  }
  // Window not exhausted by the samples: nothing sustained, so no spin.
  return FlightMode::Quadcopter;
}

void YawEstimator::gyro(double t, double yaw_rate) {
  if (have_gyro_) {
    if (t < last_t_) throw std::invalid_argument("YawEstimator: time went backwards");
    psi_ += 0.5 * (last_rate_ + yaw_rate) * (t - last_t_);
  }
  have_gyro_ = true;
  last_t_ = t;
  last_rate_ = yaw_rate;
  history_.emplace_back(t, psi_);
  while (history_.size() > 2 && history_.front().first < t - cfg_.history) {
    history_.pop_front();
  }
}

double YawEstimator::estimate_at(double t) const {
  if (history_.empty() || t >= history_.back().first) {
    // Extrapolate forward with the last rate.
    return psi_ + (history_.empty() ? 0.0 : last_rate_ * (t - last_t_));
  }
  if (t <= history_.front().first) {
    return history_.front().second - last_rate_ * (history_.front().first - t);
  }
  auto hi = std::lower_bound(history_.begin(), history_.end(), t,
                             [](const auto& e, double v) { return e.first < v; });
  auto lo = std::prev(hi);
  const double a = (t - lo->first) / (hi->first - lo->first);
  return lo->second + a * (hi->second - lo->second);
}

void YawEstimator::fix(double captured_at, double heading) {
  if (!std::isfinite(heading)) return;
  if (!initialized_) {
    // First fix: adopt it, advanced by the rotation since capture.
    const double advance = psi_ - estimate_at(captured_at);
    const double shift = heading + advance - psi_;
    psi_ += shift;
    for (auto& h : history_) h.second += shift;
    initialized_ = true;
  } else {
    const double innovation = wrap_angle(heading - estimate_at(captured_at));
    const double shift = cfg_.blend * innovation;
    psi_ += shift;
    for (auto& h : history_) h.second += shift;
  }
  last_fix_ = last_fix_ ? std::max(*last_fix_, captured_at) : captured_at;
}

bool YawEstimator::stale(double now) const {
  return !last_fix_ || now - *last_fix_ > cfg_.stale_after;
}

BicopterController::BicopterController(const ControllerGains& gains,
                                       const VehicleParams& params)
    : gains_(gains), params_(params), attitude_(gains, params.handedness) {
  if (params.propellers.size() != 2) {
    throw std::invalid_argument("BicopterController: needs a bicopter unit");
  }
  telemetry_.position.thrust = params.weight();
}

void BicopterController::update_outer(const Vec3& position, const Vec3& velocity,
                                      const Vec2& xi, const Setpoint& sp, double dt) {
  const bool freeze = telemetry_.thrust_limited || telemetry_.position.xi_saturated;
  telemetry_.position = position_control(position, velocity, sp, gains_, params_.mass,
                                         params_.gravity, integrator_, dt, freeze);
  telemetry_.attitude = attitude_.update(xi, telemetry_.position.xi_d, dt);
}

MotorCommand BicopterController::update_inner(double t, double gyro_yaw_rate) {
  yaw_.gyro(t, gyro_yaw_rate);
  telemetry_.psi_estimate = yaw_.estimate();
  telemetry_.yaw_stale = yaw_.stale(t);
  const double psi = telemetry_.psi_estimate + gyro_yaw_rate * gains_.allocation_lead;
  const double u = allocate_cyclic(telemetry_.attitude.torque, psi);
  const MixResult mix = mix_motors(telemetry_.position.thrust, u, params_);
  telemetry_.differential = mix.differential;
  telemetry_.thrust_limited = mix.thrust_limited;
  telemetry_.differential_clipped = mix.differential_clipped;
  return mix.command;
}

void require_stable_gains(const ControllerGains& gains, const VehicleParams& unit) {
  const StabilityReport r = routh_hurwitz_check({gains.k_tau_p, gains.k_tau_d}, unit);
  if (r.verdict != Stability::Stable) {
    std::ostringstream msg;
    msg << "attitude gains are " << to_string(r.verdict) << " for delta=" << unit.handedness
        << ": " << (r.violated.empty() ? "on the stability boundary" : r.violated);
    throw std::invalid_argument(msg.str());
  }
}

}  // namespace spinhover
