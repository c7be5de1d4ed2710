#include "spinhover/harness.hpp"

#include <nlohmann/json.hpp>

#include <deque>
#include <iomanip>
#include <ostream>

namespace spinhover {

namespace {

struct Quintic {
  double s, ds, dds;  // value and derivatives w.r.t. normalized time
};

Quintic quintic(double tau) {
  tau = std::clamp(tau, 0.0, 1.0);
  const double t2 = tau * tau, t3 = t2 * tau;
  return {t3 * (10.0 - 15.0 * tau + 6.0 * t2), 30.0 * t2 * (1.0 - tau) * (1.0 - tau),
          60.0 * tau - 180.0 * t2 + 120.0 * t3};
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer; keeps sensor streams independent of each other.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double world_yaw_rate(const RigidBodyState& s) { return (s.orientation * s.omega).z(); }

Orientation perturb(const Orientation& q, const Vec3& small_rotation) {
  if (small_rotation.isZero(0.0)) return q;
  const double angle = small_rotation.norm();
  return (q * Orientation(Eigen::AngleAxisd(angle, small_rotation / angle))).normalized();
}

}  // namespace

const char* to_string(VehicleConfig v) {
  switch (v) {
    case VehicleConfig::BicopterCw: return "bicopter-cw";
    case VehicleConfig::BicopterCcw: return "bicopter-ccw";
    case VehicleConfig::Quadcopter: return "quadcopter";
    case VehicleConfig::DualBicopter: return "dual-bicopter";
  }
  return "unknown";
}

const char* to_string(TrajectoryKind t) {
  switch (t) {
    case TrajectoryKind::Hover: return "hover";
    case TrajectoryKind::Circle: return "circle";
    case TrajectoryKind::Ellipse: return "ellipse";
    case TrajectoryKind::HandThrow: return "hand-throw";
  }
  return "unknown";
}

VehicleConfig parse_vehicle_config(const std::string& s) {
  for (VehicleConfig v : {VehicleConfig::BicopterCw, VehicleConfig::BicopterCcw,
                          VehicleConfig::Quadcopter, VehicleConfig::DualBicopter}) {
    if (s == to_string(v)) return v;
  }
  throw std::invalid_argument("unknown vehicle configuration '" + s + "'");
}

TrajectoryKind parse_trajectory(const std::string& s) {
  for (TrajectoryKind k : {TrajectoryKind::Hover, TrajectoryKind::Circle,
                           TrajectoryKind::Ellipse, TrajectoryKind::HandThrow}) {
    if (s == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown trajectory '" + s + "'");
}

NoiseSpec NoiseSpec::realistic() {
  NoiseSpec n;
  n.position = 1e-3;
  n.gyro = 1e-2;
  n.latency = 1e-2;
  return n;
}

double NoiseSource::normal(double sigma) {
  if (sigma == 0.0) return 0.0;
  if (spare_) {
    const double z = *spare_;
    spare_.reset();
    return sigma * z;
  }
  constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
  const double u1 = 1.0 - static_cast<double>(rng_() >> 11) * kScale;  // (0, 1]
  const double u2 = static_cast<double>(rng_() >> 11) * kScale;
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * kPi * u2);
  return sigma * r * std::cos(2.0 * kPi * u2);
}

double NoiseSource::uniform(double lo, double hi) {
  constexpr double kScale = 1.0 / 9007199254740992.0;
  return lo + (hi - lo) * static_cast<double>(rng_() >> 11) * kScale;
}

// ---------------------------------------------------------------------------
// Reference trajectory
// ---------------------------------------------------------------------------

ReferenceTrajectory::ReferenceTrajectory(const Scenario& s, Vec3 origin)
    : kind_(s.trajectory), origin_(origin) {
  if (s.trajectory == TrajectoryKind::HandThrow) {
    throw std::invalid_argument("hand-throw references are built at release");
  }
  height_ = s.hover_height;
  t_takeoff_ = s.detection_window;
  t_hover_ = t_takeoff_ + s.takeoff_time;
  pattern_start_ = t_hover_ + 2.0;
  double pattern = 0.0;
  if (kind_ == TrajectoryKind::Circle) {
    radius_x_ = radius_y_ = s.circle_radius;
    pattern = s.circle_laps * s.circle_period + ramp_;
    omega_ = 2.0 * kPi / s.circle_period;
  } else if (kind_ == TrajectoryKind::Ellipse) {
    radius_x_ = s.ellipse_a;
    radius_y_ = s.ellipse_b;
    pattern = s.ellipse_laps * s.ellipse_period + ramp_;
    omega_ = 2.0 * kPi / s.ellipse_period;
  }
  pattern_end_ = pattern_start_ + pattern;
  t_end_ = s.duration;
  t_land_ = t_end_ - s.land_time - 1.0;
  if (pattern_end_ + 1.0 > t_land_ + 1e-9) {
    throw std::invalid_argument("scenario duration too short for the trajectory");
  }
}

ReferenceTrajectory ReferenceTrajectory::braking(Vec3 p0, Vec3 v0, double t0,
                                                 double braking_time, double duration) {
  if (!(braking_time > 0.0)) throw std::invalid_argument("braking time must be positive");
  ReferenceTrajectory r;
  r.kind_ = TrajectoryKind::HandThrow;
  r.origin_ = p0;
  r.brake_v0_ = v0;
  r.brake_t0_ = t0;
  r.brake_time_ = braking_time;
  r.hold_ = p0 + 0.5 * braking_time * v0;
  r.t_end_ = duration;
  return r;
}

Setpoint ReferenceTrajectory::at(double t) const {
  Setpoint sp;
  if (kind_ == TrajectoryKind::HandThrow) {
    const double s = std::clamp(t - brake_t0_, 0.0, brake_time_);
    sp.position = origin_ + brake_v0_ * (s - 0.5 * s * s / brake_time_);
    if (t >= brake_t0_ && t < brake_t0_ + brake_time_) {
      sp.velocity = brake_v0_ * (1.0 - s / brake_time_);
      sp.acceleration = -brake_v0_ / brake_time_;
    }
    return sp;
  }

  // Vertical profile.
  double z = origin_.z(), vz = 0.0, az = 0.0;
  if (t >= t_takeoff_ && t < t_hover_) {
    const double dur = t_hover_ - t_takeoff_;
    const Quintic q = quintic((t - t_takeoff_) / dur);
    z = origin_.z() + height_ * q.s;
    vz = height_ * q.ds / dur;
    az = height_ * q.dds / (dur * dur);
  } else if (t >= t_hover_ && t < t_land_) {
    z = origin_.z() + height_;
  } else if (t >= t_land_) {
    const double dur = t_end_ - 1.0 - t_land_;
    const Quintic q = quintic((t - t_land_) / dur);
    z = origin_.z() + height_ * (1.0 - q.s);
    vz = t < t_land_ + dur ? -height_ * q.ds / dur : 0.0;
    az = t < t_land_ + dur ? -height_ * q.dds / (dur * dur) : 0.0;
  }
  sp.position = Vec3(origin_.x(), origin_.y(), z);
  sp.velocity.z() = vz;
  sp.acceleration.z() = az;

  if (kind_ == TrajectoryKind::Hover || t < pattern_start_ || t >= pattern_end_) return sp;

  // Phase angle with smooth rate ramps at both ends.
  const double d = pattern_end_ - pattern_start_;
  const double tp = t - pattern_start_;
  const double w = omega_, r = ramp_;
  double th, thd, thdd;
  if (tp < r) {
    const double u = tp / r;
    th = w * r * (u * u * u - 0.5 * u * u * u * u);
    thd = w * u * u * (3.0 - 2.0 * u);
    thdd = w * 6.0 * u * (1.0 - u) / r;
  } else if (tp <= d - r) {
    th = 0.5 * w * r + w * (tp - r);
    thd = w;
    thdd = 0.0;
  } else {
    const double u = (d - tp) / r;
    th = w * (d - r) - w * r * (u * u * u - 0.5 * u * u * u * u);
    thd = w * u * u * (3.0 - 2.0 * u);
    thdd = -w * 6.0 * u * (1.0 - u) / r;
  }
  const double c = std::cos(th), s = std::sin(th);
  const double a = radius_x_, b = radius_y_;
  sp.position.x() += a * (c - 1.0);
  sp.position.y() += b * s;
  sp.velocity.x() = -a * s * thd;
  sp.velocity.y() = b * c * thd;
  sp.acceleration.x() = -a * (c * thd * thd + s * thdd);
  sp.acceleration.y() = b * (-s * thd * thd + c * thdd);
  return sp;
}

// ---------------------------------------------------------------------------
// Logging
// ---------------------------------------------------------------------------

const std::vector<std::string>& log_columns() {
  static const std::vector<std::string> cols = {
      "t",        "vehicle",  "mode",      "x",          "y",          "z",
      "vx",       "vy",       "vz",        "qw",         "qx",         "qy",
      "qz",       "wx",       "wy",        "wz",         "ref_x",      "ref_y",
      "ref_z",    "xi_x",     "xi_y",      "xi_f_x",     "xi_f_y",     "xi_d_x",
      "xi_d_y",   "xi_err_x", "xi_err_y",  "xi_bb_x",    "xi_bb_y",    "tau_x",
      "tau_y",    "psi",      "psi_est",   "thrust",     "u",          "f1",
      "f2",       "f3",       "f4",        "deadzone",   "saturated"};
  return cols;
}

void write_log_csv(std::ostream& os, const std::vector<SimLogRecord>& log) {
  const auto& cols = log_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  const auto old_precision = os.precision(6);
  for (const SimLogRecord& r : log) {
    const Orientation& q = r.orientation;
    os << r.t << ',' << r.vehicle << ',' << r.mode << ',' << r.position.x() << ','
       << r.position.y() << ',' << r.position.z() << ',' << r.velocity.x() << ','
       << r.velocity.y() << ',' << r.velocity.z() << ',' << q.w() << ',' << q.x() << ','
       << q.y() << ',' << q.z() << ',' << r.omega.x() << ',' << r.omega.y() << ','
       << r.omega.z() << ',' << r.reference.x() << ',' << r.reference.y() << ','
       << r.reference.z() << ',' << r.xi.x() << ',' << r.xi.y() << ',' << r.xi_filtered.x()
       << ',' << r.xi_filtered.y() << ',' << r.xi_d.x() << ',' << r.xi_d.y() << ','
       << r.xi_error.x() << ',' << r.xi_error.y() << ',' << r.xi_error_shaped.x() << ','
       << r.xi_error_shaped.y() << ',' << r.torque_cmd.x() << ',' << r.torque_cmd.y() << ','
       << r.psi << ',' << r.psi_estimate << ',' << r.thrust << ',' << r.differential;
    for (double f : r.motor) os << ',' << f;
    os << ',' << int(r.deadzone) << ',' << int(r.saturated) << '\n';
  }
  os.precision(old_precision);
}

FlightMetrics compute_metrics(const std::vector<SimLogRecord>& log, double from) {
  FlightMetrics m;
  double sum_h = 0.0, sum_v = 0.0, yaw_sum = 0.0;
  std::size_t n = 0, bicopter_ticks = 0, active_ticks = 0, airborne = 0;
  for (const SimLogRecord& r : log) {
    if (r.t < from || r.mode < 0) continue;
    const Vec3 e = r.position - r.reference;
    sum_h += e.head<2>().squaredNorm();
    sum_v += e.z() * e.z();
    ++n;
    if (r.mode == 1) {
      ++bicopter_ticks;
      if (!r.deadzone) ++active_ticks;
    }
    RigidBodyState s;
    s.orientation = r.orientation;
    s.omega = r.omega;
    if (r.position.z() > 0.05) {
      yaw_sum += world_yaw_rate(s);
      ++airborne;
    }
    m.max_tilt = std::max(m.max_tilt, tilt_angle(r.orientation));
  }
  m.samples = n;
  if (n > 0) {
    m.rms_horizontal = std::sqrt(sum_h / n);
    m.rms_vertical = std::sqrt(sum_v / n);
  }
  if (bicopter_ticks > 0) m.deadzone_duty = double(active_ticks) / bicopter_ticks;
  if (airborne > 0) m.mean_yaw_rate = yaw_sum / airborne;
  if (!log.empty()) {
    RigidBodyState s;
    s.orientation = log.back().orientation;
    s.omega = log.back().omega;
    m.final_yaw_rate = world_yaw_rate(s);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Closed-loop run of one vehicle
// ---------------------------------------------------------------------------

namespace {

struct SingleRun {
  std::vector<SimLogRecord> log;
  FlightMetrics metrics;
};

/// Tracker-side velocity estimate: difference of successive positions,
/// low-pass filtered.
class VelocityEstimator {
 public:
  explicit VelocityEstimator(double cutoff) {
    filter_[0].cutoff = filter_[1].cutoff = filter_[2].cutoff = cutoff;
  }
  Vec3 update(const Vec3& p, double dt) {
    if (!last_) {
      last_ = p;
      return Vec3::Zero();
    }
    const Vec3 raw = (p - *last_) / dt;
    last_ = p;
    return Vec3(lpf_step(filter_[0], raw.x(), dt), lpf_step(filter_[1], raw.y(), dt),
                lpf_step(filter_[2], raw.z(), dt));
  }

 private:
  std::optional<Vec3> last_;
  Lpf1 filter_[3];
};

struct TrackerSample {
  Vec3 position;
  Vec2 xi;
  double heading = 0.0;
  double captured_at = 0.0;
};

SingleRun run_single(const Scenario& sc, const SimConfig& cfg, std::uint64_t seed,
                     VehicleConfig which, const Vec3& origin, int vehicle_id) {
  AirframeConstants k = cfg.airframe;
  if (sc.noise.motor_lag > 0.0) k.motor_time_constant = sc.noise.motor_lag;
  const Airframe frame = which == VehicleConfig::Quadcopter    ? Airframe::Quadcopter
                         : which == VehicleConfig::BicopterCcw ? Airframe::BicopterCcw
                                                               : Airframe::BicopterCw;
  const VehicleParams params = make_vehicle(k, frame);
  const bool is_bicopter = frame != Airframe::Quadcopter;
  const bool thrown = sc.trajectory == TrajectoryKind::HandThrow;

  NoiseSource tracker_noise(mix_seed(seed, 1));
  NoiseSource gyro_noise_a(mix_seed(seed, 2));
  NoiseSource gyro_noise_b(mix_seed(seed, 3));
  NoiseSource scenario_draw(mix_seed(seed, 4));

  // Initial state.
  RigidBodyState init;
  init.position = origin;
  double platform_rate = 0.0;
  if (thrown) {
    HandThrow h = sc.hand_throw;
    if (h.randomize) {
      h.tilt = scenario_draw.uniform(0.0, h.tilt_max);
      h.tilt_direction = scenario_draw.uniform(-kPi, kPi);
      const double heading = scenario_draw.uniform(-kPi, kPi);
      const double horiz = h.velocity.head<2>().norm();
      h.velocity.x() = horiz * std::cos(heading);
      h.velocity.y() = horiz * std::sin(heading);
    }
    init.position += h.position;
    init.velocity = h.velocity;
    init.orientation =
        orientation_from_xi(h.tilt * Vec2(std::cos(h.tilt_direction), std::sin(h.tilt_direction)),
                            0.0);
    const double rate = is_bicopter ? params.handedness * h.yaw_rate : 0.0;
    init.omega = Vec3(0.0, 0.0, rate);  // spinning about its own axis
  } else if (is_bicopter) {
    platform_rate = params.handedness * sc.launch_yaw_rate;
    init.omega = Vec3(0.0, 0.0, platform_rate);
  }

  Plant plant(params, init, true);
  const Vec3 gyro_bias = Vec3::Constant(sc.noise.gyro_bias);

  const long inner_sub = std::lround(cfg.inner_period / cfg.physics_dt);
  const long outer_sub = std::lround(cfg.outer_period / cfg.physics_dt);
  if (inner_sub < 1 || outer_sub % inner_sub != 0 ||
      std::abs(inner_sub * cfg.physics_dt - cfg.inner_period) > 1e-12 ||
      std::abs(outer_sub * cfg.physics_dt - cfg.outer_period) > 1e-12) {
    throw std::invalid_argument("loop periods must be multiples of physics_dt, outer of inner");
  }
  const long latency_steps = std::lround(sc.noise.latency / cfg.physics_dt);
  const long total_steps = std::lround(sc.duration / cfg.physics_dt);

  std::deque<std::pair<double, RigidBodyState>> delay_line;
  ModeDetector detector(cfg.detector);
  VelocityEstimator velocity(cfg.velocity_cutoff);

  std::optional<ReferenceTrajectory> reference;
  if (!thrown) reference.emplace(sc, origin);
  std::optional<BicopterController> bicopter;
  std::optional<QuadCascade> quad;
  std::optional<SplitBrainQuad> split;
  bool active = false;
  double release_time = 0.0;

  SingleRun out;
  FlightMetrics& m = out.metrics;
  TrackerSample tracker;
  Vec3 velocity_estimate = Vec3::Zero();
  QuadOutput last_quad;
  bool failure_applied = false;

  auto quad_feedback = [&](NoiseSource& gyro_src, const RigidBodyState& s) {
    QuadFeedback fb;
    fb.position = tracker.position;
    fb.velocity = velocity_estimate;
    fb.orientation = perturb(s.orientation, tracker_noise.normal3(sc.noise.tilt));
    fb.gyro = s.omega + gyro_src.normal3(sc.noise.gyro) + gyro_bias;
    return fb;
  };

  auto fail = [&](double t, const std::string& why) {
    m.crashed = true;
    m.crash_time = t;
    m.crash_reason = why;
  };

  // One record per outer tick in [0, duration).
  for (long n = 0; n < total_steps; ++n) {
    const double t = n * cfg.physics_dt;
    const RigidBodyState& truth = plant.state();

    delay_line.emplace_back(t, truth);
    while (static_cast<long>(delay_line.size()) > latency_steps + 1) delay_line.pop_front();

    if (n % inner_sub == 0) {
      const Vec3 gyro = truth.omega + gyro_noise_a.normal3(sc.noise.gyro) + gyro_bias;
      const bool outer_tick = n % outer_sub == 0;

      if (outer_tick) {
        const auto& [t_cap, seen] = delay_line.front();
        tracker.captured_at = t_cap;
        tracker.position = seen.position + tracker_noise.normal3(sc.noise.position);
        tracker.xi = zb_to_xi(seen.orientation).xi +
                     Vec2(tracker_noise.normal(sc.noise.tilt), tracker_noise.normal(sc.noise.tilt));
        tracker.heading =
            wrap_angle(yaw_of(seen.orientation) + tracker_noise.normal(sc.noise.heading));
        velocity_estimate = velocity.update(tracker.position, cfg.outer_period);
      }

      if (!detector.mode()) detector.sample(t, gyro.z());
      const bool platform_done = thrown || t >= sc.detection_window - 1e-12;
      if (!active && detector.mode() && platform_done) {
        const bool says_bicopter = *detector.mode() == FlightMode::Bicopter;
        m.detected_mode = detector.mode();
        if (says_bicopter != is_bicopter) {
          m.mode_mismatch = true;
          break;
        }
        active = true;
        release_time = t;
        if (thrown) {
          reference = ReferenceTrajectory::braking(tracker.position, velocity_estimate, t,
                                                   sc.hand_throw.braking_time, sc.duration);
        }
        if (is_bicopter) {
          // The motor time constant is treated as identified: lead the heading by it.
          ControllerGains g = cfg.gains;
          g.allocation_lead += sc.noise.motor_lag;
          bicopter.emplace(g, params);
          bicopter->heading_fix(tracker.captured_at, tracker.heading);
        } else if (sc.split_brain) {
          split.emplace(cfg.quad_gains, params);
        } else {
          quad.emplace(cfg.quad_gains, params);
        }
      }

      if (active && sc.board_failure_at && split && !failure_applied &&
          t >= *sc.board_failure_at) {
        split->fail_board(Handedness::Cw);
        failure_applied = true;
      }

      MotorCommand cmd;
      cmd.thrust.assign(params.propellers.size(), 0.0);
      if (active) {
        const Setpoint sp = reference->at(t);
        if (bicopter) {
          if (outer_tick) {
            bicopter->heading_fix(tracker.captured_at, tracker.heading);
            bicopter->update_outer(tracker.position, velocity_estimate, tracker.xi, sp,
                                   cfg.outer_period);
          }
          cmd = bicopter->update_inner(t, gyro.z());
        } else if (quad) {
          const QuadFeedback fb = quad_feedback(gyro_noise_a, truth);
          if (outer_tick) quad->update_position(fb, sp, cfg.outer_period);
          last_quad = quad->update_attitude(fb);
          cmd = last_quad.command;
        } else {
          const QuadFeedback fa = quad_feedback(gyro_noise_a, truth);
          const QuadFeedback fb = quad_feedback(gyro_noise_b, truth);
          if (outer_tick) split->update_position(fa, fb, sp, cfg.outer_period);
          last_quad = split->update_attitude(fa, fb);
          cmd = last_quad.command;
        }
      }
      if (active && sc.propeller_failure_at && t >= *sc.propeller_failure_at) {
        for (std::size_t k = 0; k < params.propellers.size(); ++k) {
          if (params.propellers[k].index == 1) cmd.thrust[k] = 0.0;
        }
      }
      plant.set_command(cmd);

      if (outer_tick) {
        SimLogRecord r;
        r.t = t;
        r.vehicle = vehicle_id;
        r.mode = active ? (is_bicopter ? 1 : 0) : -1;
        r.position = truth.position;
        r.velocity = truth.velocity;
        r.orientation = truth.orientation;
        r.omega = truth.omega;
        r.reference = reference ? reference->at(t).position : truth.position;
        r.xi = zb_to_xi(truth.orientation).xi;
        r.psi = yaw_of(truth.orientation);
        const std::vector<double> f = plant.applied_thrust();
        for (std::size_t i = 0; i < params.propellers.size(); ++i) {
          r.motor[params.propellers[i].index - 1] = f[i];
        }
        if (bicopter) {
          const BicopterTelemetry& tel = bicopter->telemetry();
          r.xi_filtered = tel.attitude.xi_filtered;
          r.xi_d = tel.position.xi_d;
          r.xi_error = tel.attitude.error;
          r.xi_error_shaped = tel.attitude.shaped_error;
          r.torque_cmd = tel.attitude.torque;
          r.psi_estimate = tel.psi_estimate;
          r.thrust = tel.position.thrust;
          r.differential = tel.differential;
          r.deadzone = tel.attitude.deadzone_active;
          r.saturated = tel.thrust_limited || tel.differential_clipped;
        } else if (quad || split) {
          r.thrust = last_quad.thrust;
          r.torque_cmd = last_quad.torque.head<2>();
          r.psi_estimate = r.psi;
          r.saturated = last_quad.saturated;
        }
        out.log.push_back(r);
      }
    }

    const bool on_platform = !thrown && t < sc.detection_window - 1e-12 && !active;
    try {
      if (on_platform) {
        plant.hold_spinning(platform_rate, cfg.physics_dt);
      } else {
        plant.step(cfg.physics_dt);
      }
    } catch (const IntegrationFault&) {
      fail(t + cfg.physics_dt, "non-finite state");
      break;
    }
    const RigidBodyState& s = plant.state();
    if (!PlantVector::pack(s, {}).allFinite()) {
      fail(plant.time(), "non-finite state");
      break;
    }
    if ((s.position - origin).norm() > cfg.escape_radius) {
      fail(plant.time(), "left the flight volume");
      break;
    }
    if (tilt_angle(s.orientation) > cfg.tilt_crash) {
      fail(plant.time(), "tilt beyond limit");
      break;
    }
    if (plant.last_impact_speed() > cfg.hard_landing_speed) {
      fail(plant.time(), "hard ground impact");
      break;
    }
  }

  FlightMetrics computed = compute_metrics(out.log, release_time);
  computed.crashed = m.crashed;
  computed.crash_time = m.crash_time;
  computed.crash_reason = m.crash_reason;
  computed.mode_mismatch = m.mode_mismatch;
  computed.detected_mode = m.detected_mode;

  if (thrown && active && !computed.crashed) {
    // Earliest time after which the vehicle stays inside the hold radius.
    const Vec3 hold = reference->hold_point();
    double entered = -1.0;
    for (const SimLogRecord& r : out.log) {
      if (r.t < release_time) continue;
      if ((r.position - hold).norm() <= kRecoveryRadius) {
        if (entered < 0.0) entered = r.t;
      } else {
        entered = -1.0;
      }
    }
    if (entered >= 0.0) {
      computed.recovery_time = entered - release_time;
      computed.recovered = computed.recovery_time <= kRecoveryDeadline;
    }
  }
  out.metrics = computed;
  return out;
}

}  // namespace

ScenarioResult run_scenario(const Scenario& s, const SimConfig& cfg, std::uint64_t seed) {
  if (!(s.duration > 0.0)) throw std::invalid_argument("scenario duration must be positive");
  ScenarioResult r;
  r.scenario = s;
  r.seed = seed;

  if (s.vehicle == VehicleConfig::DualBicopter) {
    if (s.split_brain) throw std::invalid_argument("split-brain needs the quadcopter");
    SingleRun a = run_single(s, cfg, seed, VehicleConfig::BicopterCw, Vec3(0.0, -0.75, 0.0), 1);
    SingleRun b =
        run_single(s, cfg, mix_seed(seed, 99), VehicleConfig::BicopterCcw, Vec3(0.0, 0.75, 0.0), 2);
    r.per_vehicle = {a.metrics, b.metrics};
    r.log.reserve(a.log.size() + b.log.size());
    std::size_t i = 0, j = 0;
    while (i < a.log.size() || j < b.log.size()) {
      if (j >= b.log.size() || (i < a.log.size() && a.log[i].t <= b.log[j].t)) {
        r.log.push_back(a.log[i++]);
      } else {
        r.log.push_back(b.log[j++]);
      }
    }
    r.metrics = a.metrics;
    const FlightMetrics& o = b.metrics;
    r.metrics.rms_horizontal = std::max(r.metrics.rms_horizontal, o.rms_horizontal);
    r.metrics.rms_vertical = std::max(r.metrics.rms_vertical, o.rms_vertical);
    r.metrics.deadzone_duty = std::max(r.metrics.deadzone_duty, o.deadzone_duty);
    r.metrics.max_tilt = std::max(r.metrics.max_tilt, o.max_tilt);
    r.metrics.mode_mismatch = r.metrics.mode_mismatch || o.mode_mismatch;
    r.metrics.recovered = r.metrics.recovered && o.recovered;
    if (!r.metrics.crashed && o.crashed) {
      r.metrics.crashed = true;
      r.metrics.crash_time = o.crash_time;
      r.metrics.crash_reason = o.crash_reason;
    }
    r.metrics.samples += o.samples;
    r.equilibrium_yaw_rate = equilibrium_yaw_rate(make_bicopter(cfg.airframe, Handedness::Cw));
  } else {
    if (s.split_brain && s.vehicle != VehicleConfig::Quadcopter) {
      throw std::invalid_argument("split-brain needs the quadcopter");
    }
    SingleRun a = run_single(s, cfg, seed, s.vehicle, Vec3::Zero(), 0);
    r.log = std::move(a.log);
    r.metrics = a.metrics;
    r.per_vehicle = {a.metrics};
    if (s.vehicle != VehicleConfig::Quadcopter) {
      const Handedness h =
          s.vehicle == VehicleConfig::BicopterCcw ? Handedness::Ccw : Handedness::Cw;
      r.equilibrium_yaw_rate = equilibrium_yaw_rate(make_bicopter(cfg.airframe, h));
    }
  }
  return r;
}

void write_metrics_json(std::ostream& os, const ScenarioResult& r) {
  auto one = [](const FlightMetrics& m) {
    nlohmann::ordered_json j;
    j["rms_horizontal_m"] = m.rms_horizontal;
    j["rms_vertical_m"] = m.rms_vertical;
    j["deadzone_duty"] = m.deadzone_duty;
    j["final_yaw_rate_rad_s"] = m.final_yaw_rate;
    j["mean_yaw_rate_rad_s"] = m.mean_yaw_rate;
    j["max_tilt_rad"] = m.max_tilt;
    j["crashed"] = m.crashed;
    if (m.crashed) {
      j["crash_time_s"] = m.crash_time;
      j["crash_reason"] = m.crash_reason;
    }
    j["mode_mismatch"] = m.mode_mismatch;
    j["detected_mode"] = m.detected_mode ? to_string(*m.detected_mode) : "none";
    j["recovered"] = m.recovered;
    j["recovery_time_s"] = m.recovery_time;
    j["samples"] = m.samples;
    return j;
  };
  nlohmann::ordered_json j;
  j["scenario"] = r.scenario.name;
  j["seed"] = r.seed;
  j["vehicle"] = to_string(r.scenario.vehicle);
  j["trajectory"] = to_string(r.scenario.trajectory);
  j["split_brain"] = r.scenario.split_brain;
  j["equilibrium_yaw_rate_rad_s"] = r.equilibrium_yaw_rate;
  j["metrics"] = one(r.metrics);
  if (r.per_vehicle.size() > 1) {
    for (const FlightMetrics& m : r.per_vehicle) j["per_vehicle"].push_back(one(m));
  }
  os << j.dump(2) << '\n';
}

}  // namespace spinhover
