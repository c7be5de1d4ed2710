#include "spinhover/vehicle.hpp"

#include <stdexcept>

namespace spinhover {

std::string to_string(Airframe a) {
  switch (a) {
    case Airframe::BicopterCw: return "bicopter_cw";
    case Airframe::BicopterCcw: return "bicopter_ccw";
    case Airframe::Quadcopter: return "quadcopter";
  }
  return "unknown";
}

std::size_t VehicleParams::propeller_slot(int index) const {
  for (std::size_t k = 0; k < propellers.size(); ++k) {
    if (propellers[k].index == index) return k;
  }
  throw std::out_of_range("no propeller " + std::to_string(index) + " on " +
                          to_string(airframe));
}

void VehicleParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string(name) + " must be positive and finite");
    }
  };
  // Zero torque ratio or drag is allowed for drag-free and non-spinning studies.
  auto non_negative = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string(name) + " must be non-negative and finite");
    }
  };
  positive(mass, "mass");
  positive(gravity, "gravity");
  positive(arm, "arm");
  non_negative(torque_ratio, "torque_ratio");
  non_negative(drag_h, "drag_h");
  non_negative(drag_v, "drag_v");
  positive(inertia_d, "inertia_d");
  positive(inertia_z, "inertia_z");
  positive(thrust_max, "thrust_max");
  if (thrust_min != 0.0) throw std::invalid_argument("thrust_min must be 0");
  if (motor_time_constant < 0.0) throw std::invalid_argument("motor_time_constant must be >= 0");
  if (propellers.empty()) throw std::invalid_argument("vehicle has no propellers");
}

namespace {

Propeller make_prop(int index, const Vec3& pos, int sigma, int delta,
                    const AirframeConstants& k) {
  // Each unit's lumped drag is shared by its two propellers.
  return Propeller{index, pos, sigma, delta, 0.5 * Vec3(k.drag_h, k.drag_h, k.drag_v)};
}

void copy_common(VehicleParams& p, const AirframeConstants& k) {
  p.gravity = k.gravity;
  p.arm = k.arm;
  p.torque_ratio = k.torque_ratio;
  p.drag_h = k.drag_h;
  p.drag_v = k.drag_v;
  p.thrust_max = k.thrust_max;
  p.motor_time_constant = k.motor_time_constant;
}

}  // namespace

VehicleParams make_bicopter(const AirframeConstants& k, Handedness h) {
  VehicleParams p;
  copy_common(p, k);
  p.airframe = h == Handedness::Cw ? Airframe::BicopterCw : Airframe::BicopterCcw;
  p.mass = k.mass;
  p.inertia_d = k.inertia_d;
  p.inertia_z = k.inertia_z;
  p.handedness = sign_of(h);
  const int first = h == Handedness::Cw ? 1 : 2;
  const int d = sign_of(h);
  p.propellers = {make_prop(first, Vec3(0.0, k.arm, 0.0), +1, d, k),
                  make_prop(first + 2, Vec3(0.0, -k.arm, 0.0), -1, d, k)};
  p.validate();
  return p;
}

VehicleParams make_quadcopter(const AirframeConstants& k) {
  VehicleParams p;
  copy_common(p, k);
  p.airframe = Airframe::Quadcopter;
  p.mass = k.quad_mass;
  p.handedness = 0;
  const double h = 0.5 * k.module_spacing;
  // The two units are stacked symmetrically about the composite centre of
  // mass; the attachment mass sits at the centre.
  p.inertia_d = 2.0 * k.inertia_d + 2.0 * k.mass * h * h;
  p.inertia_z = 2.0 * k.inertia_z;
  // Cw unit on top along body y; Ccw unit below, rotated a quarter turn so
  // its arm lies along body x.
  p.propellers = {make_prop(1, Vec3(0.0, k.arm, h), +1, +1, k),
                  make_prop(2, Vec3(-k.arm, 0.0, -h), +1, -1, k),
                  make_prop(3, Vec3(0.0, -k.arm, h), -1, +1, k),
                  make_prop(4, Vec3(k.arm, 0.0, -h), -1, -1, k)};
  p.validate();
  return p;
}

VehicleParams make_vehicle(const AirframeConstants& k, Airframe a) {
  switch (a) {
    case Airframe::BicopterCw: return make_bicopter(k, Handedness::Cw);
    case Airframe::BicopterCcw: return make_bicopter(k, Handedness::Ccw);
    case Airframe::Quadcopter: return make_quadcopter(k);
  }
  throw std::invalid_argument("unknown airframe");
}

Vec3 local_air_velocity(const RigidBodyState& s, const VehicleParams& p, std::size_t slot) {
  const Vec3& l = p.propellers.at(slot).position;
  return s.orientation.conjugate() * s.velocity + s.omega.cross(l);
}

Wrench propeller_wrench(const RigidBodyState& s, const std::vector<double>& thrust,
                        const VehicleParams& p) {
  if (thrust.size() != p.propellers.size()) {
    throw std::invalid_argument("propeller_wrench: thrust count mismatch");
  }
  constexpr double kSlack = 1e-12;
  Wrench w;
  for (std::size_t k = 0; k < p.propellers.size(); ++k) {
    const Propeller& prop = p.propellers[k];
    const double f = thrust[k];
    if (f < p.thrust_min - kSlack || f > p.thrust_max + kSlack) {
      throw std::out_of_range("propeller " + std::to_string(prop.index) + " thrust " +
                              std::to_string(f) + " outside actuator limits");
    }
    const Vec3 thrust_force = f * Vec3::UnitZ();
    const Vec3 drag_force = -prop.drag.cwiseProduct(local_air_velocity(s, p, k));
    const Vec3 force = thrust_force + drag_force;
    w.force += force;
    w.torque += prop.position.cross(force) + prop.delta * p.torque_ratio * f * Vec3::UnitZ();
  }
  return w;
}

Eigen::VectorXd PlantVector::pack(const RigidBodyState& s, const std::vector<double>& motors) {
  Eigen::VectorXd x(kMotors + static_cast<int>(motors.size()));
  x.segment<3>(kPos) = s.position;
  x.segment<3>(kVel) = s.velocity;
  x.segment<4>(kQuat) << s.orientation.w(), s.orientation.x(), s.orientation.y(),
      s.orientation.z();
  x.segment<3>(kOmega) = s.omega;
  for (std::size_t k = 0; k < motors.size(); ++k) x(kMotors + static_cast<int>(k)) = motors[k];
  return x;
}

RigidBodyState PlantVector::unpack(const Eigen::VectorXd& x) {
  RigidBodyState s;
  s.position = x.segment<3>(kPos);
  s.velocity = x.segment<3>(kVel);
  s.orientation = Orientation(x(kQuat), x(kQuat + 1), x(kQuat + 2), x(kQuat + 3));
  s.omega = x.segment<3>(kOmega);
  return s;
}

std::vector<double> PlantVector::motors(const Eigen::VectorXd& x) {
  std::vector<double> m;
  for (int k = kMotors; k < x.size(); ++k) m.push_back(x(k));
  return m;
}

Eigen::VectorXd dynamics_derivative(const Eigen::VectorXd& x, const MotorCommand& cmd,
                                    const VehicleParams& p) {
  RigidBodyState s = PlantVector::unpack(x);
  // RK4 stages see slightly denormalized quaternions; rotate with the unit one.
  const double qn = s.orientation.norm();
  const Orientation q_unit(s.orientation.coeffs() / qn);
  s.orientation = q_unit;

  const bool lag = p.motor_time_constant > 0.0;
  std::vector<double> thrust = lag ? PlantVector::motors(x) : cmd.thrust;
  for (double& f : thrust) f = std::clamp(f, p.thrust_min, p.thrust_max);

  const Wrench w = propeller_wrench(s, thrust, p);
  const Mat3 inertia = p.inertia();

  Eigen::VectorXd dx(x.size());
  dx.segment<3>(PlantVector::kPos) = s.velocity;
  dx.segment<3>(PlantVector::kVel) =
      (q_unit * w.force) / p.mass - p.gravity * Vec3::UnitZ();
  const Orientation q_raw = PlantVector::unpack(x).orientation;
  dx.segment<4>(PlantVector::kQuat) = quaternion_rate(q_raw, s.omega);
  dx.segment<3>(PlantVector::kOmega) =
      inertia.inverse() * (w.torque - s.omega.cross(inertia * s.omega));
  if (lag) {
    for (std::size_t k = 0; k < thrust.size(); ++k) {
      const double target = std::clamp(cmd.thrust.at(k), p.thrust_min, p.thrust_max);
      dx(PlantVector::kMotors + static_cast<int>(k)) =
          (target - x(PlantVector::kMotors + static_cast<int>(k))) / p.motor_time_constant;
    }
  }
  return dx;
}

Plant::Plant(VehicleParams params, const RigidBodyState& initial, bool ground)
    : params_(std::move(params)), state_(initial), ground_(ground) {
  params_.validate();
  state_.orientation.normalize();
  command_.thrust.assign(params_.propellers.size(), 0.0);
  if (params_.motor_time_constant > 0.0) motor_state_.assign(params_.propellers.size(), 0.0);
  on_ground_ = ground_ && state_.position.z() <= 0.0;
}

void Plant::set_command(const MotorCommand& cmd) {
  if (cmd.thrust.size() != params_.propellers.size()) {
    throw std::invalid_argument("Plant::set_command: thrust count mismatch");
  }
  command_ = cmd;
}

std::vector<double> Plant::applied_thrust() const {
  if (!motor_state_.empty()) return motor_state_;
  std::vector<double> f = command_.thrust;
  for (double& v : f) v = std::clamp(v, params_.thrust_min, params_.thrust_max);
  return f;
}

void Plant::step(double dt) {
  const Eigen::VectorXd x = PlantVector::pack(state_, motor_state_);
  auto f = [this](double, const Eigen::VectorXd& y) {
    return dynamics_derivative(y, command_, params_);
  };
  const Eigen::VectorXd next = rk4_step(f, x, time_, dt);
  state_ = PlantVector::unpack(next);
  state_.orientation.normalize();
  if (!motor_state_.empty()) motor_state_ = PlantVector::motors(next);
  time_ += dt;

  impact_speed_ = 0.0;
  if (ground_ && state_.position.z() <= 0.0) {
    // Inelastic contact with friction: no penetration, no sliding.
    if (!on_ground_) impact_speed_ = std::max(0.0, -state_.velocity.z());
    state_.position.z() = 0.0;
    if (state_.velocity.z() < 0.0) state_.velocity.z() = 0.0;
    state_.velocity.x() = 0.0;
    state_.velocity.y() = 0.0;
    on_ground_ = true;
  } else {
    on_ground_ = false;
  }
}

void Plant::hold_spinning(double yaw_rate, double dt) {
  const Orientation spin(Eigen::AngleAxisd(yaw_rate * dt, Vec3::UnitZ()));
  state_.orientation = (spin * state_.orientation).normalized();
  state_.velocity.setZero();
  state_.omega = state_.orientation.conjugate() * Vec3(0.0, 0.0, yaw_rate);
  time_ += dt;
  on_ground_ = ground_ && state_.position.z() <= 0.0;
}

SimulationResult simulate(const RigidBodyState& initial, const ControllerCallback& controller,
                          const VehicleParams& params, double duration, double physics_dt,
                          double control_period) {
  if (!(duration > 0.0)) throw std::invalid_argument("simulate: duration must be > 0");
  if (!(physics_dt > 0.0) || physics_dt > control_period + 1e-15) {
    throw std::invalid_argument("simulate: need 0 < physics_dt <= control period");
  }
  const long sub = std::lround(control_period / physics_dt);
  if (std::abs(sub * physics_dt - control_period) > 1e-9 * control_period) {
    throw std::invalid_argument("simulate: control period must be a multiple of physics_dt");
  }
  const long ticks = std::lround(duration / control_period);

  Plant plant(params, initial);
  SimulationResult out;
  out.samples.reserve(static_cast<std::size_t>(ticks));
  for (long n = 0; n < ticks; ++n) {
    const double t = n * control_period;
    plant.set_command(controller(t, plant.state()));
    out.samples.push_back({t, plant.state(), plant.applied_thrust()});
    for (long k = 0; k < sub; ++k) {
      try {
        plant.step(physics_dt);
      } catch (const IntegrationFault& e) {
        out.crashed = true;
        out.crash_time = e.time();
        out.crash_reason = "non-finite state";
        return out;
      }
      const RigidBodyState& s = plant.state();
      const Eigen::VectorXd x = PlantVector::pack(s, {});
      if (!x.allFinite()) {
        out.crashed = true;
        out.crash_time = plant.time();
        out.crash_reason = "non-finite state";
        return out;
      }
      if (s.position.norm() > 100.0) {
        out.crashed = true;
        out.crash_time = plant.time();
        out.crash_reason = "position bound exceeded";
        return out;
      }
    }
  }
  return out;
}

}  // namespace spinhover
